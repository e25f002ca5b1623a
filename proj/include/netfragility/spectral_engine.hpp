#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "netfragility/errors.hpp"
#include "netfragility/io_util.hpp"
#include "netfragility/matrix.hpp"
#include "netfragility/network_builder.hpp"
#include "netfragility/symmetric_eigen.hpp"

namespace netfragility {

// A graph is declared disconnected when lambda2 < kConnectivityRelTol * lambda_n.
inline constexpr double kConnectivityRelTol = 1e-8;

struct LaplacianMatrix {
  Matrix entries;
  std::vector<std::string> banks;
  bool normalized = false;
};

struct LaplacianSpectrum {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors;  // column k pairs with eigenvalues[k]; may be empty
  std::vector<std::string> banks;
  bool normalized = false;

  std::size_t size() const noexcept { return eigenvalues.size(); }
  double largest() const { return eigenvalues.empty() ? 0.0 : eigenvalues.back(); }
  // Absolute threshold below which an eigenvalue counts as zero.
  double zero_tolerance() const { return kConnectivityRelTol * std::abs(largest()); }
  bool has_vectors() const noexcept { return eigenvectors.rows() == eigenvalues.size() && !eigenvalues.empty(); }
  Vector vector(std::size_t k) const { return eigenvectors.column(k); }
};

// L = D - A.
inline LaplacianMatrix laplacian(const WeightedGraph& g) {
  const std::size_t n = g.size();
  LaplacianMatrix lap;
  lap.banks = g.banks;
  lap.entries = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      lap.entries(i, j) = -g.weights(i, j);
      d += g.weights(i, j);
    }
    lap.entries(i, i) = d;
  }
  return lap;
}

// I - D^{-1/2} A D^{-1/2}; spectrum lies in [0, 2].
inline LaplacianMatrix normalized_laplacian(const WeightedGraph& g) {
  const std::size_t n = g.size();
  const Vector d = g.degrees();
  Vector inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] > 0.0))
      throw DomainError("normalized_laplacian: bank " + g.banks[i] + " is isolated (degree 0)");
    inv_sqrt[i] = 1.0 / std::sqrt(d[i]);
  }
  LaplacianMatrix lap;
  lap.banks = g.banks;
  lap.normalized = true;
  lap.entries = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    lap.entries(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = -g.weights(i, j) * inv_sqrt[i] * inv_sqrt[j];
      lap.entries(i, j) = v;
      lap.entries(j, i) = v;
    }
  }
  return lap;
}

inline LaplacianSpectrum spectrum(const LaplacianMatrix& lap, bool with_vectors = true) {
  auto eig = symmetric_eigen(lap.entries, with_vectors);
  return {std::move(eig.values), std::move(eig.vectors), lap.banks, lap.normalized};
}

// Number of eigenvalues below the zero tolerance: the connected-component
// count for a standard Laplacian.
inline std::size_t zero_multiplicity(const LaplacianSpectrum& s) {
  const double tol = s.zero_tolerance();
  std::size_t k = 0;
  for (double v : s.eigenvalues)
    if (v < tol) ++k;
  return k;
}

// Algebraic connectivity from a spectrum; 0 when disconnected or n < 2.
inline double lambda2_of(const LaplacianSpectrum& s) {
  if (s.size() < 2) return 0.0;
  const double l2 = s.eigenvalues[1];
  return l2 < s.zero_tolerance() ? 0.0 : l2;
}

// Eigenvalues-only path used where only lambda2 is needed (bootstrap, centrality).
inline double algebraic_connectivity(const WeightedGraph& g) {
  if (g.size() < 2) return 0.0;
  return lambda2_of(spectrum(laplacian(g), false));
}

// Moore-Penrose inverse on the non-null eigenspace; zero modes map to zero.
inline Matrix pseudo_inverse(const LaplacianSpectrum& s) {
  if (!s.has_vectors()) throw DomainError("pseudo_inverse: spectrum has no eigenvectors");
  const std::size_t n = s.size();
  const double tol = s.zero_tolerance();
  Matrix p = Matrix::square(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double lam = s.eigenvalues[k];
    if (lam < tol) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double vi = s.eigenvectors(i, k) / lam;
      for (std::size_t j = 0; j < n; ++j) p(i, j) += vi * s.eigenvectors(j, k);
    }
  }
  return p;
}

struct FragilityMetrics {
  bool connected = false;
  double lambda2 = 0.0;
  double spectral_gap = 0.0;
  double lambda3 = 0.0;
  double spectral_radius = 0.0;
  double radius_ratio = 0.0;          // lambda_n / lambda2; +inf when disconnected
  double effective_resistance = 0.0;  // sum_{i>=2} 1/lambda_i; +inf when disconnected
  double normalized_lambda2 = 0.0;    // NaN when a node is isolated
  double avg_resistance_distance = 0.0;
};

inline FragilityMetrics fragility_metrics(const WeightedGraph& g) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  FragilityMetrics m;
  const std::size_t n = g.size();
  if (n < 2) throw DomainError("fragility_metrics: need at least 2 banks");

  const auto s = spectrum(laplacian(g), true);
  const auto& ev = s.eigenvalues;
  m.lambda2 = lambda2_of(s);
  m.connected = m.lambda2 > 0.0;
  m.spectral_gap = m.lambda2;  // lambda1 is zero for every Laplacian
  m.lambda3 = n >= 3 ? ev[2] : 0.0;
  m.spectral_radius = ev.back();

  if (m.connected) {
    m.radius_ratio = m.spectral_radius / m.lambda2;
    for (std::size_t k = 1; k < n; ++k) m.effective_resistance += 1.0 / ev[k];
    const Matrix pinv = pseudo_inverse(s);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) total += pinv(i, i) + pinv(j, j) - 2.0 * pinv(i, j);
    m.avg_resistance_distance = 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
  } else {
    m.radius_ratio = inf;
    m.effective_resistance = inf;
    m.avg_resistance_distance = inf;
  }

  const Vector d = g.degrees();
  const bool isolated = std::any_of(d.begin(), d.end(), [](double x) { return !(x > 0.0); });
  if (isolated) {
    m.normalized_lambda2 = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto ns = spectrum(normalized_laplacian(g), false);
    m.normalized_lambda2 = lambda2_of(ns);
  }
  return m;
}

// Time for the slowest non-uniform mode to decay by a factor epsilon.
inline double mixing_time(double lambda2, double epsilon) {
  if (!(lambda2 > 0.0)) throw DomainError("mixing_time: lambda2 must be positive");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("mixing_time: epsilon must lie in (0, 1)");
  return std::log(1.0 / epsilon) / lambda2;
}

// Drop in lambda2 when the bank and its incident edges are removed.
inline double spectral_centrality(const WeightedGraph& g, std::string_view bank) {
  auto idx = g.index_of(bank);
  if (!idx) throw DomainError("spectral_centrality: unknown bank " + std::string(bank));
  if (g.size() < 3) throw DomainError("spectral_centrality: need at least 3 banks");
  return algebraic_connectivity(g) - algebraic_connectivity(g.without(*idx));
}

inline Vector spectral_centralities(const WeightedGraph& g) {
  if (g.size() < 3) throw DomainError("spectral_centrality: need at least 3 banks");
  const double base = algebraic_connectivity(g);
  Vector sc(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) sc[i] = base - algebraic_connectivity(g.without(i));
  return sc;
}

// Closed form for a complete graph with uniform weights: 2 E_total / (n - 1),
// where E_total is the sum of weights over unordered pairs.
inline double complete_graph_lambda2(std::size_t n, double total_exposure) {
  if (n < 2) throw DomainError("complete_graph_lambda2: need n >= 2");
  if (!(total_exposure >= 0.0)) throw DomainError("complete_graph_lambda2: total exposure must be >= 0");
  return 2.0 * total_exposure / static_cast<double>(n - 1);
}

// 1/2 sum_{i,j} w_ij (x_i - x_j)^2, the Dirichlet energy x^T L x.
inline double quadratic_form(const WeightedGraph& g, std::span<const double> x) {
  if (x.size() != g.size())
    throw DomainError("quadratic_form: vector length " + std::to_string(x.size()) + " does not match " +
                      std::to_string(g.size()) + " banks");
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j) {
      const double dx = x[i] - x[j];
      acc += g.weights(i, j) * dx * dx;
    }
  return acc;
}

// {"eigenvalues": [...], "bank_order": [...], "normalized": bool[, "eigenvectors": [[col0], [col1], ...]]}
inline std::string spectrum_to_json(const LaplacianSpectrum& s, bool include_vectors = false) {
  std::string out = "{\"normalized\": ";
  out += s.normalized ? "true" : "false";
  out += ", \"bank_order\": [";
  for (std::size_t i = 0; i < s.banks.size(); ++i) out += (i ? ", " : "") + nlohmann::json(s.banks[i]).dump();
  out += "], \"eigenvalues\": [";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + format_double(s.eigenvalues[i]);
  out += "]";
  if (include_vectors && s.has_vectors()) {
    out += ", \"eigenvectors\": [";
    for (std::size_t k = 0; k < s.size(); ++k) {
      out += k ? ",\n  [" : "\n  [";
      for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + format_double(s.eigenvectors(i, k));
      out += "]";
    }
    out += "\n]";
  }
  out += "}\n";
  return out;
}

}  // namespace netfragility
