#pragma once

// Test-only reference implementations. None of these reuse the library's
// eigensolver or propagator: they work from the raw weight matrix with
// elementary arithmetic.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "netfragility/network_builder.hpp"

namespace oracle {

using netfragility::Matrix;
using netfragility::Vector;
using netfragility::WeightedGraph;

// Random symmetric graph: each pair is an edge with probability `density`,
// weights uniform in (0, wmax]. A spanning path is added when `connected`.
inline WeightedGraph random_graph(std::mt19937_64& rng, std::size_t n, double density, double wmax,
                                  bool connected = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix w = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool path = connected && j == i + 1;
      if (path || u(rng) < density) {
        const double v = wmax * (1.0 - u(rng));
        w(i, j) = v;
        w(j, i) = v;
      }
    }
  return netfragility::make_graph(std::move(w));
}

inline WeightedGraph complete_graph(std::size_t n, double w) {
  Matrix m = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m(i, j) = w;
  return netfragility::make_graph(std::move(m));
}

inline Matrix raw_laplacian(const WeightedGraph& g) {
  const std::size_t n = g.size();
  Matrix l = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        l(i, j) = -g.weights(i, j);
        l(i, i) += g.weights(i, j);
      }
  return l;
}

// det(mu I - M) by Gaussian elimination with partial pivoting, in long double.
inline long double char_poly(const Matrix& m, long double mu) {
  const std::size_t n = m.rows();
  std::vector<long double> a(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] = (i == j ? mu : 0.0L) - m(i, j);
  long double det = 1.0L;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t r = k + 1; r < n; ++r)
      if (std::fabs(a[r * n + k]) > std::fabs(a[p * n + k])) p = r;
    if (a[p * n + k] == 0.0L) return 0.0L;
    if (p != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[k * n + c], a[p * n + c]);
      det = -det;
    }
    det *= a[k * n + k];
    for (std::size_t r = k + 1; r < n; ++r) {
      const long double f = a[r * n + k] / a[k * n + k];
      for (std::size_t c = k; c < n; ++c) a[r * n + c] -= f * a[k * n + c];
    }
  }
  return det;
}

// Roots of the characteristic polynomial: sign changes on a fine grid over the
// Gershgorin interval, refined by bisection. Assumes simple roots.
inline std::vector<double> char_poly_roots(const Matrix& m, std::size_t grid = 20000) {
  const std::size_t n = m.rows();
  // Gershgorin interval, padded.
  double glo = 0.0, ghi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) r += std::fabs(m(i, j));
    glo = std::min(glo, m(i, i) - r);
    ghi = std::max(ghi, m(i, i) + r);
  }
  const double pad = 0.01 * (ghi - glo) + 1e-3;
  const double lo = glo - pad;
  const double hi = ghi + pad;
  std::vector<double> roots;
  double a = lo;
  long double fa = char_poly(m, a);
  for (std::size_t k = 1; k <= grid; ++k) {
    const double b = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid);
    const long double fb = char_poly(m, b);
    if (fa == 0.0L) {
      roots.push_back(a);
    } else if ((fa < 0.0L) != (fb < 0.0L) && fb != 0.0L) {
      double x0 = a, x1 = b;
      long double f0 = fa;
      for (int it = 0; it < 200 && x1 - x0 > 1e-15 * std::max(1.0, std::fabs(x1)); ++it) {
        const double mid = 0.5 * (x0 + x1);
        const long double fm = char_poly(m, mid);
        if ((fm < 0.0L) == (f0 < 0.0L)) {
          x0 = mid;
          f0 = fm;
        } else {
          x1 = mid;
        }
      }
      roots.push_back(0.5 * (x0 + x1));
    }
    a = b;
    fa = fb;
  }
  return roots;
}

// Classic fourth-order Runge-Kutta for dx/dt = -L x + f (f active for t >= onset).
inline Vector rk4(const WeightedGraph& g, Vector x, const Vector& f, double onset, double t0, double t1,
                  double h) {
  const Matrix l = raw_laplacian(g);
  const std::size_t n = x.size();
  auto rhs = [&](bool forced, const Vector& y) {
    Vector d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) d[i] -= l(i, j) * y[j];
      if (forced) d[i] += f[i];
    }
    return d;
  };
  auto axpy = [&](const Vector& y, const Vector& k, double s) {
    Vector r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] + s * k[i];
    return r;
  };
  // Integrate piecewise so the forcing switch-on never falls inside a step.
  auto segment = [&](double a, double b, bool forced) {
    const auto steps = static_cast<std::size_t>(std::ceil((b - a) / h - 1e-12));
    const double hh = steps ? (b - a) / static_cast<double>(steps) : 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const Vector k1 = rhs(forced, x);
      const Vector k2 = rhs(forced, axpy(x, k1, hh / 2));
      const Vector k3 = rhs(forced, axpy(x, k2, hh / 2));
      const Vector k4 = rhs(forced, axpy(x, k3, hh));
      for (std::size_t i = 0; i < n; ++i) x[i] += hh / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
  };
  if (f.empty() || onset >= t1) {
    segment(t0, t1, false);
  } else if (onset <= t0) {
    segment(t0, t1, true);
  } else {
    segment(t0, onset, false);
    segment(onset, t1, true);
  }
  return x;
}

struct OracleFailure {
  std::size_t round;
  std::size_t bank;
};

// Step-by-step cascade: explicit Euler at step h inside each window, threshold
// check at window ends, simultaneous removal, Laplacian rebuilt on survivors.
inline std::vector<OracleFailure> euler_cascade(const WeightedGraph& g, const Vector& capitals, const Vector& f,
                                                double onset, double horizon, double dt, double h) {
  const std::size_t n = g.size();
  std::vector<bool> alive(n, true);
  Vector x(n, 0.0);
  std::vector<OracleFailure> out;
  std::size_t round = 0;
  const auto windows = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const auto steps = static_cast<std::size_t>(std::llround(dt / h));
  double t = 0.0;
  for (std::size_t w = 1; w <= windows; ++w) {
    for (std::size_t s = 0; s < steps; ++s) {
      Vector dx(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = 0; j < n; ++j)
          if (alive[j] && j != i) dx[i] += g.weights(i, j) * (x[j] - x[i]);
        if (t >= onset) dx[i] += f[i];
      }
      for (std::size_t i = 0; i < n; ++i)
        if (alive[i]) x[i] += h * dx[i];
      t += h;
    }
    std::vector<std::size_t> failing;
    for (std::size_t i = 0; i < n; ++i)
      if (alive[i] && x[i] >= capitals[i]) failing.push_back(i);
    if (!failing.empty()) {
      ++round;
      for (auto i : failing) {
        out.push_back({round, i});
        alive[i] = false;
        x[i] = 0.0;
      }
    }
  }
  return out;
}

// Second-smallest eigenvalue from the characteristic-polynomial roots.
inline double lambda2_by_roots(const WeightedGraph& g) {
  auto r = char_poly_roots(raw_laplacian(g));
  std::sort(r.begin(), r.end());
  return r.size() >= 2 ? r[1] : 0.0;
}

// Minimum final value of `objective` over every admissible cut sequence of
// the greedy deleveraging process (same admissibility rule: a cut of `step`
// on an edge incident to a bank with remaining target, counting toward both
// endpoints, counterparty overshoot at most one step).
inline double exhaustive_deleverage(const WeightedGraph& g, const Vector& targets, double step,
                                    const std::function<double(const WeightedGraph&)>& objective) {
  const std::size_t n = g.size();
  double best = INFINITY;
  const double tol = 1e-12 * *std::max_element(targets.begin(), targets.end());
  std::function<void(const WeightedGraph&, const Vector&)> rec = [&](const WeightedGraph& w, const Vector& rem) {
    bool pending = false;
    for (double r : rem) pending = pending || r > tol;
    if (!pending) {
      best = std::min(best, objective(w));
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (rem[i] <= tol) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !(w.weights(i, j) > 0.0)) continue;
        const double amt = std::min({step, rem[i], w.weights(i, j), rem[j] + step});
        if (amt <= tol) continue;
        WeightedGraph w2 = w;
        Vector rem2 = rem;
        w2.weights(i, j) -= amt;
        w2.weights(j, i) = w2.weights(i, j);
        rem2[i] -= amt;
        rem2[j] -= amt;
        rec(w2, rem2);
      }
    }
  };
  rec(g, targets);
  return best;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::path(NETFRAGILITY_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
