#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "netfragility/errors.hpp"
#include "netfragility/exposure_model.hpp"
#include "netfragility/io_util.hpp"
#include "netfragility/matrix.hpp"

namespace netfragility {

enum class AllocationMethod { equal, size_weighted, exposure_weighted };

inline std::string to_string(AllocationMethod m) {
  switch (m) {
    case AllocationMethod::equal: return "equal";
    case AllocationMethod::size_weighted: return "size";
    case AllocationMethod::exposure_weighted: return "exposure";
  }
  return "?";
}

inline AllocationMethod parse_allocation_method(std::string_view s) {
  if (s == "equal") return AllocationMethod::equal;
  if (s == "size" || s == "size_weighted") return AllocationMethod::size_weighted;
  if (s == "exposure" || s == "exposure_weighted") return AllocationMethod::exposure_weighted;
  throw InputError("unknown allocation method '" + std::string(s) + "' (expected equal, size or exposure)");
}

// Estimated bilateral exposures, entry (i, j) = amount bank i holds on bank j.
struct DirectedExposureMatrix {
  std::vector<std::string> banks;
  Matrix entries;
  Vector dropped;  // per bank: exposure that had no eligible counterparty
};

// Undirected exposure network. Weights are symmetric with a zero diagonal.
struct WeightedGraph {
  std::vector<std::string> banks;
  Matrix weights;
  int year = 0;

  std::size_t size() const noexcept { return banks.size(); }

  std::optional<std::size_t> index_of(std::string_view bank) const {
    auto it = std::find(banks.begin(), banks.end(), bank);
    if (it == banks.end()) return std::nullopt;
    return static_cast<std::size_t>(it - banks.begin());
  }

  Vector degrees() const {
    Vector d(size(), 0.0);
    for (std::size_t i = 0; i < size(); ++i) d[i] = netfragility::sum(weights.row(i));
    return d;
  }

  // Node-induced subgraph on the given indices, in the given order.
  WeightedGraph induced(std::span<const std::size_t> keep) const {
    WeightedGraph g;
    g.year = year;
    for (auto k : keep) g.banks.push_back(banks[k]);
    g.weights = weights.submatrix(keep);
    return g;
  }

  WeightedGraph without(std::size_t node) const {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < size(); ++i)
      if (i != node) keep.push_back(i);
    return induced(keep);
  }

  bool operator==(const WeightedGraph&) const = default;
};

// Builds a graph from an explicit weight matrix (tests, deserialization).
// The matrix must be square, symmetric, non-negative with a zero diagonal.
inline WeightedGraph make_graph(Matrix weights, std::vector<std::string> banks = {}, int year = 0) {
  if (!weights.is_square()) throw DomainError("graph weights must be square");
  const std::size_t n = weights.rows();
  if (banks.empty())
    for (std::size_t i = 0; i < n; ++i) banks.push_back("B" + std::to_string(i));
  if (banks.size() != n) throw DomainError("graph bank list does not match matrix order");
  for (std::size_t i = 0; i < n; ++i) {
    if (weights(i, i) != 0.0) throw DomainError("graph has a self-loop at " + banks[i]);
    for (std::size_t j = 0; j < n; ++j) {
      if (!(weights(i, j) >= 0.0)) throw DomainError("graph has a negative or NaN weight");
      if (weights(i, j) != weights(j, i)) throw DomainError("graph weights are not symmetric");
    }
  }
  return {std::move(banks), std::move(weights), year};
}

// Splits each bank's country exposure across the sample banks of that
// country. `origin` optionally tags nodes that are copies of one source bank
// (bootstrap resamples); copies never allocate to each other. By default
// every node is its own origin.
inline DirectedExposureMatrix allocate(std::span<const BankRecord> banks, AllocationMethod method,
                                      Diagnostics* diag = nullptr,
                                      std::span<const std::size_t> origin = {}) {
  const std::size_t n = banks.size();
  if (n < 2) throw DomainError("allocate: need at least 2 banks, got " + std::to_string(n));
  if (!origin.empty() && origin.size() != n) throw DomainError("allocate: origin tags do not match banks");
  auto origin_of = [&](std::size_t i) { return origin.empty() ? i : origin[i]; };

  if (method == AllocationMethod::size_weighted) {
    for (const auto& b : banks)
      if (!(b.total_assets > 0.0))
        throw DomainError("allocate: size-weighted scheme needs total_assets > 0 (bank " + b.lei + ")");
  }
  if (method == AllocationMethod::exposure_weighted) {
    for (const auto& b : banks)
      if (!(b.total_exposure() > 0.0))
        throw DomainError("allocate: exposure-weighted scheme needs positive total exposure (bank " + b.lei + ")");
  }

  std::map<std::string, std::vector<std::size_t>> by_country;
  for (std::size_t i = 0; i < n; ++i) by_country[banks[i].country].push_back(i);

  auto share_weight = [&](std::size_t j) {
    switch (method) {
      case AllocationMethod::equal: return 1.0;
      case AllocationMethod::size_weighted: return banks[j].total_assets;
      case AllocationMethod::exposure_weighted: return banks[j].total_exposure();
    }
    return 1.0;
  };

  DirectedExposureMatrix out;
  out.entries = Matrix::square(n);
  out.dropped.assign(n, 0.0);
  for (const auto& b : banks) out.banks.push_back(b.lei);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [country, amount] : banks[i].exposures) {
      if (amount == 0.0) continue;
      eligible.clear();
      if (auto it = by_country.find(country); it != by_country.end())
        for (auto j : it->second)
          if (origin_of(j) != origin_of(i)) eligible.push_back(j);

      if (eligible.empty()) {
        out.dropped[i] += amount;
        warn(diag, "bank " + banks[i].lei + ": exposure " + format_double(amount) + " to " + country +
                       " dropped (no other sample bank in that country)");
        continue;
      }
      double denom = 0.0;
      for (auto j : eligible) denom += share_weight(j);
      if (!(denom > 0.0))
        throw DomainError("allocate: zero-weight denominator for bank " + banks[i].lei + " country " + country);
      for (auto j : eligible) out.entries(i, j) += amount * share_weight(j) / denom;
    }
  }
  return out;
}

inline WeightedGraph symmetrize(const DirectedExposureMatrix& directed, int year = 0) {
  const std::size_t n = directed.banks.size();
  WeightedGraph g;
  g.banks = directed.banks;
  g.year = year;
  g.weights = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = 0.5 * (directed.entries(i, j) + directed.entries(j, i));
      g.weights(i, j) = w;
      g.weights(j, i) = w;
    }
  }
  return g;
}

struct BankConservation {
  std::string lei;
  double expected = 0.0;  // disclosed exposure less undeliverable remainder
  double actual = 0.0;    // directed row sum
};

struct ValidationReport {
  bool total_ok = true;
  double directed_total = 0.0;
  double graph_total = 0.0;
  double total_discrepancy = 0.0;  // graph - directed
  bool banks_ok = true;
  std::vector<BankConservation> bank_failures;
  std::vector<std::string> notes;  // dropped exposures that the expectation accounts for

  bool ok() const { return total_ok && banks_ok; }
};

// Checks total-weight conservation across symmetrization and per-bank
// conservation of the allocation against the disclosed exposures. The
// per-bank expectation is recomputed from the records, independently of
// allocate's own bookkeeping.
inline ValidationReport validate_conservation(const WeightedGraph& graph, const DirectedExposureMatrix& directed,
                                              std::span<const BankRecord> banks, double rel_tol = 1e-9) {
  const std::size_t n = banks.size();
  if (graph.banks != directed.banks || directed.banks.size() != n)
    throw DomainError("validate_conservation: mismatched bank lists");
  for (std::size_t i = 0; i < n; ++i)
    if (banks[i].lei != graph.banks[i]) throw DomainError("validate_conservation: mismatched bank lists");

  ValidationReport rep;
  rep.directed_total = directed.entries.sum();
  rep.graph_total = graph.weights.sum();
  rep.total_discrepancy = rep.graph_total - rep.directed_total;
  rep.total_ok = std::abs(rep.total_discrepancy) <= rel_tol * std::max(std::abs(rep.directed_total), 1e-300);

  std::map<std::string, std::size_t> country_count;
  for (const auto& b : banks) ++country_count[b.country];

  for (std::size_t i = 0; i < n; ++i) {
    double expected = 0.0;
    for (const auto& [c, v] : banks[i].exposures) {
      const std::size_t others = country_count[c] - (c == banks[i].country ? 1 : 0);
      if (others == 0) {
        if (v != 0.0) rep.notes.push_back("bank " + banks[i].lei + ": " + format_double(v) + " to " + c + " undeliverable");
        continue;
      }
      expected += v;
    }
    const double actual = netfragility::sum(directed.entries.row(i));
    if (std::abs(actual - expected) > rel_tol * std::max(std::abs(expected), 1e-300) &&
        std::abs(actual - expected) > 0.0) {
      rep.banks_ok = false;
      rep.bank_failures.push_back({banks[i].lei, expected, actual});
    }
  }
  return rep;
}

struct NetworkStats {
  std::size_t n_nodes = 0;
  std::size_t n_edges = 0;
  std::size_t possible_edges = 0;
  double density = 0.0;
  double total_weight = 0.0;  // sum over i < j
  double mean_weight = 0.0;
  double sd_weight = 0.0;
  double min_weight = 0.0;
  double max_weight = 0.0;
  Vector degrees;
  double mean_degree = 0.0;
  double sd_degree = 0.0;
  double min_degree = 0.0;
  double max_degree = 0.0;
};

namespace detail {

// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
inline double sample_sd(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Weight moments run over all n(n-1)/2 pairs; edge counts and density count
// strictly positive weights only.
inline NetworkStats network_stats(const WeightedGraph& g) {
  NetworkStats s;
  const std::size_t n = g.size();
  s.n_nodes = n;
  s.possible_edges = n * (n - 1) / 2;
  Vector pairs;
  pairs.reserve(s.possible_edges);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = g.weights(i, j);
      pairs.push_back(w);
      if (w > 0.0) ++s.n_edges;
      s.total_weight += w;
    }
  s.density = s.possible_edges ? static_cast<double>(s.n_edges) / static_cast<double>(s.possible_edges) : 0.0;
  if (!pairs.empty()) {
    s.mean_weight = s.total_weight / static_cast<double>(pairs.size());
    s.sd_weight = detail::sample_sd(pairs, s.mean_weight);
    auto [mn, mx] = std::minmax_element(pairs.begin(), pairs.end());
    s.min_weight = *mn;
    s.max_weight = *mx;
  }
  s.degrees = g.degrees();
  if (n > 0) {
    s.mean_degree = 2.0 * s.total_weight / static_cast<double>(n);
    s.sd_degree = detail::sample_sd(s.degrees, s.mean_degree);
    auto [mn, mx] = std::minmax_element(s.degrees.begin(), s.degrees.end());
    s.min_degree = *mn;
    s.max_degree = *mx;
  }
  return s;
}

// One panel year through allocation and symmetrization.
struct YearNetwork {
  DirectedExposureMatrix directed;
  WeightedGraph graph;
};

inline YearNetwork build_year_network(const ExposurePanel& panel, int year, AllocationMethod method,
                                      Diagnostics* diag = nullptr) {
  const auto& recs = panel.year(year);
  YearNetwork yn;
  yn.directed = allocate(recs, method, diag);
  yn.graph = symmetrize(yn.directed, year);
  return yn;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr std::string_view kEdgeListHeader = "year,bank_i,bank_j,weight";

// All i < j pairs, zeros included, so the bank ordering survives a round trip.
inline std::string graph_to_edge_csv(const WeightedGraph& g, bool header = true) {
  std::string out;
  if (header) out += std::string(kEdgeListHeader) + "\n";
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      out += std::to_string(g.year) + "," + csv_escape(g.banks[i]) + "," + csv_escape(g.banks[j]) + "," +
             format_double(g.weights(i, j)) + "\n";
  return out;
}

// Parses an edge list; returns one graph per year in ascending year order.
inline std::vector<WeightedGraph> parse_edge_csv(const std::string& text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kEdgeListHeader)
    throw ParseError(source, 1, "expected header '" + std::string(kEdgeListHeader) + "'");

  struct Acc {
    std::vector<std::string> banks;
    std::map<std::string, std::size_t> index;
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
  };
  std::map<int, Acc> years;
  auto node = [](Acc& a, const std::string& b) {
    auto [it, ins] = a.index.try_emplace(b, a.banks.size());
    if (ins) a.banks.push_back(b);
    return it->second;
  };
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto f = split_csv_line(lines[ln]);
    if (f.size() != 4) throw ParseError(source, ln + 1, "expected 4 fields");
    const auto y = parse_int(f[0]);
    const auto w = parse_double(f[3]);
    if (!y) throw ParseError(source, ln + 1, "column year: not an integer");
    if (!w || !(*w >= 0.0) || !std::isfinite(*w)) throw ParseError(source, ln + 1, "column weight: invalid '" + f[3] + "'");
    if (f[1] == f[2]) throw ParseError(source, ln + 1, "self-loop on " + f[1]);
    auto& acc = years[static_cast<int>(*y)];
    const auto i = node(acc, f[1]);
    const auto j = node(acc, f[2]);
    acc.edges.emplace_back(i, j, *w);
  }
  std::vector<WeightedGraph> out;
  for (auto& [y, acc] : years) {
    WeightedGraph g;
    g.year = y;
    g.banks = acc.banks;
    g.weights = Matrix::square(acc.banks.size());
    for (auto [i, j, w] : acc.edges) {
      g.weights(i, j) = w;
      g.weights(j, i) = w;
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Adjacency JSON. Numbers are written as 17-significant-digit literals.
inline std::string graph_to_json(const WeightedGraph& g) {
  std::string out = "{\"year\": " + std::to_string(g.year) + ", \"banks\": [";
  for (std::size_t i = 0; i < g.size(); ++i) out += (i ? ", " : "") + nlohmann::json(g.banks[i]).dump();
  out += "], \"weights\": [";
  for (std::size_t i = 0; i < g.size(); ++i) {
    out += i ? ",\n  [" : "\n  [";
    for (std::size_t j = 0; j < g.size(); ++j) out += (j ? ", " : "") + format_double(g.weights(i, j));
    out += "]";
  }
  out += "\n]}\n";
  return out;
}

inline WeightedGraph graph_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  WeightedGraph g;
  g.year = j.at("year").get<int>();
  g.banks = j.at("banks").get<std::vector<std::string>>();
  const auto& rows = j.at("weights");
  const std::size_t n = g.banks.size();
  if (rows.size() != n) throw InputError("adjacency JSON: weights row count does not match banks");
  Matrix w = Matrix::square(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != n) throw InputError("adjacency JSON: ragged weights row");
    for (std::size_t k = 0; k < n; ++k) w(i, k) = rows[i][k].get<double>();
  }
  return make_graph(std::move(w), std::move(g.banks), g.year);
}

}  // namespace netfragility
