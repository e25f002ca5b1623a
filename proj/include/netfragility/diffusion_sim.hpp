#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "netfragility/errors.hpp"
#include "netfragility/matrix.hpp"
#include "netfragility/network_builder.hpp"
#include "netfragility/spectral_engine.hpp"

namespace netfragility {

struct DistressState {
  Vector values;
  double time = 0.0;
};

// Per-bank forcing rate, switched on at `onset` (a step function in time).
struct ForcingSpec {
  Vector vector;
  double onset = 0.0;
};

// Exact propagation of dx/dt = -L x + f in the Laplacian eigenbasis.
// Eigenvalues under the connectivity tolerance are treated as exact zeros, so
// each connected component conserves its own distress.
class SpectralPropagator {
public:
  explicit SpectralPropagator(const WeightedGraph& g) : spec_(spectrum(laplacian(g), true)) {
    const double tol = spec_.zero_tolerance();
    for (double& v : spec_.eigenvalues)
      if (v < tol) v = 0.0;
  }

  std::size_t size() const noexcept { return spec_.size(); }
  const LaplacianSpectrum& spectrum_data() const noexcept { return spec_; }

  // Modal coordinates c = V^T x.
  Vector to_modes(std::span<const double> x) const {
    const std::size_t n = size();
    Vector c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = spec_.eigenvectors.row(i);
      for (std::size_t k = 0; k < n; ++k) c[k] += row[k] * x[i];
    }
    return c;
  }

  Vector from_modes(std::span<const double> c) const { return multiply(spec_.eigenvectors, c); }

  // x(tau) for dx/dt = -L x + f with f held constant over [0, tau].
  Vector advance(std::span<const double> x, std::span<const double> f, double tau) const {
    const std::size_t n = size();
    if (n == 0) return {};
    Vector c = to_modes(x);
    const bool forced = !f.empty();
    Vector fc = forced ? to_modes(f) : Vector{};
    for (std::size_t k = 0; k < n; ++k) {
      const double lam = spec_.eigenvalues[k];
      if (lam == 0.0) {
        if (forced) c[k] += fc[k] * tau;
        continue;
      }
      c[k] *= std::exp(-lam * tau);
      if (forced) c[k] += fc[k] * (-std::expm1(-lam * tau) / lam);
    }
    return from_modes(c);
  }

private:
  LaplacianSpectrum spec_;
};

// Homogeneous diffusion over an elapsed time t >= 0.
inline DistressState evolve(const WeightedGraph& g, const DistressState& x0, double t) {
  if (!(t >= 0.0)) throw DomainError("evolve: elapsed time must be >= 0");
  if (x0.values.size() != g.size()) throw DomainError("evolve: state length does not match graph");
  if (t == 0.0 || g.size() == 0) return {x0.values, x0.time + t};
  SpectralPropagator p(g);
  return {p.advance(x0.values, {}, t), x0.time + t};
}

namespace detail {

// Advances from clock t0 to t0 + t; forcing is active on clock times >= onset.
inline Vector advance_piecewise(const SpectralPropagator& p, std::span<const double> x, const ForcingSpec& f,
                                double t0, double t) {
  const double t1 = t0 + t;
  if (t1 <= f.onset) return p.advance(x, {}, t);
  if (t0 >= f.onset) return p.advance(x, f.vector, t);
  const Vector mid = p.advance(x, {}, f.onset - t0);
  return p.advance(mid, f.vector, t1 - f.onset);
}

}  // namespace detail

// Forced diffusion over an elapsed time t >= 0 from x0.time. After onset the
// solution is e^{-L s} x + L^+ (I - e^{-L s}) f + (1^T f / n) s 1 for a
// connected graph (s = time since onset); the constant part of f accumulates.
inline DistressState evolve_forced(const WeightedGraph& g, const DistressState& x0, const ForcingSpec& forcing,
                                   double t) {
  if (!(t >= 0.0)) throw DomainError("evolve_forced: elapsed time must be >= 0");
  if (x0.values.size() != g.size()) throw DomainError("evolve_forced: state length does not match graph");
  if (forcing.vector.size() != g.size()) throw DomainError("evolve_forced: forcing length does not match graph");
  for (double v : forcing.vector)
    if (!std::isfinite(v)) throw DomainError("evolve_forced: forcing has non-finite entries");
  if (t == 0.0 || g.size() == 0) return {x0.values, x0.time + t};
  SpectralPropagator p(g);
  return {detail::advance_piecewise(p, x0.values, forcing, x0.time, t), x0.time + t};
}

// Leading-order response to a permanent shock: ATE(t) = ATE_inf (1 - e^{-lambda2 t}).
inline Vector ate_trajectory(double ate_infinity, double lambda2, std::span<const double> t_grid) {
  if (!(lambda2 > 0.0)) throw DomainError("ate_trajectory: lambda2 must be positive");
  Vector out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    if (t < 0.0) throw DomainError("ate_trajectory: negative time in grid");
    out.push_back(std::isinf(t) ? ate_infinity : -ate_infinity * std::expm1(-lambda2 * t));
  }
  return out;
}

// Lower bound on ATE_persistent / ATE_immediate when lambda2 moves from pre to post.
inline double amplification_bound(double lambda2_pre, double lambda2_post, double alpha) {
  if (!(lambda2_pre > 0.0) || !(lambda2_post > 0.0))
    throw DomainError("amplification_bound: lambda2 values must be positive");
  if (!(alpha > 0.0)) throw DomainError("amplification_bound: alpha must be positive");
  return 1.0 + alpha * (lambda2_post / lambda2_pre - 1.0);
}

// ---------------------------------------------------------------------------
// Cascade stress test
// ---------------------------------------------------------------------------

struct FailureEvent {
  std::size_t round = 0;   // 1-based failure round
  std::size_t window = 0;  // 1-based window index
  double time = 0.0;       // window end
  std::string bank;
  double distress = 0.0;  // removed from the system and logged as loss
  double capital = 0.0;
};

struct CascadeResult {
  std::vector<FailureEvent> failed;
  std::size_t total_failures = 0;
  double pre_lambda2 = 0.0;
  double post_lambda2 = 0.0;
  double fragility_change = 0.0;
  std::size_t rounds = 0;   // windows that produced at least one failure
  std::size_t windows = 0;  // windows simulated
  double stabilization_time = 0.0;
  double total_losses = 0.0;
  std::vector<std::string> survivors;
  // Distress per bank at every window end (NaN once a bank has failed).
  std::vector<double> grid;
  std::vector<Vector> trajectory;
};

// Forced diffusion in windows of length dt. At each window end every live
// bank with distress >= capital fails; all such banks are removed at once and
// the Laplacian is rebuilt on the survivors.
inline CascadeResult cascade_stress_test(const WeightedGraph& g, std::span<const double> capitals,
                                         const ForcingSpec& shock, double horizon, double dt,
                                         bool record_trajectory = false) {
  const std::size_t n = g.size();
  if (!(dt > 0.0)) throw DomainError("cascade_stress_test: dt must be positive");
  if (!(horizon >= dt)) throw DomainError("cascade_stress_test: horizon must be >= dt");
  if (capitals.size() != n || shock.vector.size() != n)
    throw DomainError("cascade_stress_test: capitals/shock length does not match graph");
  for (double c : capitals)
    if (!(c > 0.0)) throw DomainError("cascade_stress_test: capitals must be positive");

  CascadeResult res;
  res.pre_lambda2 = algebraic_connectivity(g);

  std::vector<std::size_t> live(n);
  for (std::size_t i = 0; i < n; ++i) live[i] = i;
  Vector x(n, 0.0);  // live banks only, aligned with `live`
  WeightedGraph sub = g;
  SpectralPropagator prop(sub);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  const auto n_windows = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  double clock = 0.0;
  for (std::size_t w = 1; w <= n_windows && !live.empty(); ++w) {
    const double end = std::min(static_cast<double>(w) * dt, horizon);
    ForcingSpec f{Vector(live.size()), shock.onset};
    for (std::size_t a = 0; a < live.size(); ++a) f.vector[a] = shock.vector[live[a]];
    x = detail::advance_piecewise(prop, x, f, clock, end - clock);
    clock = end;
    res.windows = w;

    std::vector<std::size_t> keep;
    bool any = false;
    for (std::size_t a = 0; a < live.size(); ++a) {
      const std::size_t bank = live[a];
      if (x[a] >= capitals[bank]) {
        if (!any) ++res.rounds;
        any = true;
        res.failed.push_back({res.rounds, w, end, g.banks[bank], x[a], capitals[bank]});
        res.total_losses += x[a];
      } else {
        keep.push_back(a);
      }
    }

    if (record_trajectory) {
      Vector row(n, nan);
      for (std::size_t a = 0; a < live.size(); ++a) row[live[a]] = x[a];
      res.grid.push_back(end);
      res.trajectory.push_back(std::move(row));
    }

    if (any) {
      res.stabilization_time = end;
      std::vector<std::size_t> next_live;
      Vector next_x;
      for (auto a : keep) {
        next_live.push_back(live[a]);
        next_x.push_back(x[a]);
      }
      live = std::move(next_live);
      x = std::move(next_x);
      sub = g.induced(live);
      prop = SpectralPropagator(sub);
    }
  }

  res.total_failures = res.failed.size();
  for (auto i : live) res.survivors.push_back(g.banks[i]);
  res.post_lambda2 = live.size() >= 2 ? algebraic_connectivity(g.induced(live)) : 0.0;
  res.fragility_change = res.post_lambda2 - res.pre_lambda2;
  return res;
}

// ---------------------------------------------------------------------------
// Greedy deleveraging
// ---------------------------------------------------------------------------

struct EdgeCut {
  std::size_t i = 0;  // bank whose target drove the cut
  std::size_t j = 0;
  double amount = 0.0;
};

struct DeleverageResult {
  WeightedGraph graph;
  double lambda2 = 0.0;
  double baseline_lambda2 = 0.0;  // proportional-cut comparison
  std::vector<EdgeCut> cuts;
  Vector reductions;  // achieved per-bank degree reduction
  std::vector<std::string> warnings;
};

// Proportional comparison: every edge shrinks by the larger of its two
// endpoints' target fractions D_i / d_i.
inline WeightedGraph proportional_deleverage(const WeightedGraph& g, std::span<const double> targets) {
  const Vector d = g.degrees();
  WeightedGraph out = g;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      const double fi = d[i] > 0 ? targets[i] / d[i] : 0.0;
      const double fj = d[j] > 0 ? targets[j] / d[j] : 0.0;
      const double w = g.weights(i, j) * (1.0 - std::min(1.0, std::max(fi, fj)));
      out.weights(i, j) = w;
      out.weights(j, i) = w;
    }
  return out;
}

// Repeatedly removes `step` of exposure from the edge whose reduction lowers
// lambda2 the most, among edges incident to banks with remaining target. A cut
// of edge (i, j) counts toward both endpoints; a cut is admissible only while
// the counterparty's overshoot stays within one step. Ties go to the lowest
// (bank, counterparty) index pair.
inline DeleverageResult greedy_deleverage(const WeightedGraph& g, std::span<const double> targets, double step) {
  const std::size_t n = g.size();
  if (targets.size() != n) throw DomainError("greedy_deleverage: targets length does not match graph");
  if (!(step > 0.0)) throw DomainError("greedy_deleverage: step must be positive");
  const Vector d = g.degrees();
  double smallest_positive = std::numeric_limits<double>::infinity();
  double largest = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(targets[i] >= 0.0)) throw DomainError("greedy_deleverage: targets must be >= 0");
    if (targets[i] > d[i] * (1.0 + 1e-12))
      throw DomainError("greedy_deleverage: infeasible target for bank " + g.banks[i] + " (exceeds its degree)");
    if (targets[i] > 0.0) smallest_positive = std::min(smallest_positive, targets[i]);
    largest = std::max(largest, targets[i]);
  }

  DeleverageResult res;
  res.graph = g;
  res.reductions.assign(n, 0.0);
  if (largest == 0.0) {
    res.lambda2 = res.baseline_lambda2 = algebraic_connectivity(g);
    return res;
  }
  if (step > smallest_positive * (1.0 + 1e-12))
    throw DomainError("greedy_deleverage: step exceeds the smallest positive target");

  const double done_tol = 1e-12 * largest;
  Vector remaining(targets.begin(), targets.end());
  WeightedGraph work = g;

  // Necessary condition for the remaining targets to stay reachable: every
  // bank with an open target still has enough cuttable exposure to
  // counterparties that can absorb it (their own target plus one step).
  auto reachable = [&](const WeightedGraph& w, const Vector& rem) {
    for (std::size_t k = 0; k < n; ++k) {
      if (rem[k] <= done_tol) continue;
      double room = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != k) room += std::min(w.weights(k, j), std::max(0.0, rem[j] + step));
      if (room < rem[k] - done_tol) return false;
    }
    return true;
  };

  while (true) {
    bool pending = false;
    for (double r : remaining) pending = pending || r > done_tol;
    if (!pending) break;

    double best_l2 = std::numeric_limits<double>::infinity();
    EdgeCut best;
    bool found = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (remaining[i] <= done_tol) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !(work.weights(i, j) > 0.0)) continue;
        // A counterparty may end at most one step past its own target.
        const double amount = std::min({step, remaining[i], work.weights(i, j), remaining[j] + step});
        if (amount <= done_tol) continue;
        WeightedGraph trial = work;
        trial.weights(i, j) -= amount;
        trial.weights(j, i) = trial.weights(i, j);
        Vector rem_after = remaining;
        rem_after[i] -= amount;
        rem_after[j] -= amount;
        if (!reachable(trial, rem_after)) continue;
        const double l2 = algebraic_connectivity(trial);
        if (!found || l2 < best_l2 - 1e-12 * std::max(std::abs(best_l2), 1.0)) {
          best_l2 = l2;
          best = {i, j, amount};
          found = true;
        }
      }
    }
    if (!found)
      throw DomainError("greedy_deleverage: infeasible targets (no admissible edge left to cut)");

    work.weights(best.i, best.j) -= best.amount;
    work.weights(best.j, best.i) = work.weights(best.i, best.j);
    remaining[best.i] -= best.amount;
    remaining[best.j] -= best.amount;
    res.reductions[best.i] += best.amount;
    res.reductions[best.j] += best.amount;
    res.cuts.push_back(best);
  }

  res.graph = std::move(work);
  res.lambda2 = algebraic_connectivity(res.graph);
  res.baseline_lambda2 = algebraic_connectivity(proportional_deleverage(g, targets));
  if (res.lambda2 > res.baseline_lambda2 * (1.0 + 1e-9))
    res.warnings.push_back("greedy lambda2 " + format_double(res.lambda2) + " exceeds proportional baseline " +
                           format_double(res.baseline_lambda2));
  return res;
}

}  // namespace netfragility
