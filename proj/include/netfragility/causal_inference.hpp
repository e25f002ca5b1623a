#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "netfragility/errors.hpp"
#include "netfragility/exposure_model.hpp"
#include "netfragility/io_util.hpp"
#include "netfragility/network_builder.hpp"
#include "netfragility/rng.hpp"
#include "netfragility/spectral_engine.hpp"

namespace netfragility {

// Fragility outcome by year with a pre/post treatment partition.
struct FragilitySeries {
  std::vector<std::pair<int, double>> points;  // (year, lambda2), ascending years
  std::vector<int> pre_years;
  std::vector<int> post_years;

  double at(int year) const {
    for (const auto& [y, v] : points)
      if (y == year) return v;
    throw DomainError("series has no year " + std::to_string(year));
  }

  void validate() const {
    if (pre_years.empty()) throw DomainError("series partition: no pre-treatment years");
    if (post_years.empty()) throw DomainError("series partition: no post-treatment years");
    for (int y : pre_years)
      if (std::find(post_years.begin(), post_years.end(), y) != post_years.end())
        throw DomainError("series partition: year " + std::to_string(y) + " is both pre and post");
    for (int y : pre_years) (void)at(y);
    for (int y : post_years) (void)at(y);
  }
};

// Partition by a treatment date: years before it are pre, the rest post.
inline FragilitySeries make_series(std::vector<std::pair<int, double>> points, int first_treated_year) {
  std::sort(points.begin(), points.end());
  FragilitySeries s;
  s.points = std::move(points);
  for (const auto& [y, v] : s.points) (y < first_treated_year ? s.pre_years : s.post_years).push_back(y);
  return s;
}

enum class DidSpec { level, detrended };

inline std::string to_string(DidSpec s) { return s == DidSpec::level ? "level" : "detrended"; }

inline DidSpec parse_did_spec(std::string_view s) {
  if (s == "level") return DidSpec::level;
  if (s == "detrended") return DidSpec::detrended;
  throw InputError("unknown DID spec '" + std::string(s) + "' (expected level or detrended)");
}

struct LinearTrend {
  double gamma0 = 0.0;  // intercept at year 0
  double gamma1 = 0.0;  // slope per year
  double r_squared = 0.0;

  double operator()(double year) const { return gamma0 + gamma1 * year; }
};

struct DidEffect {
  double lambda2 = 0.0;
  double beta = 0.0;
  double pct_change = 0.0;  // percent of the reference level
  double reference = 0.0;   // baseline alpha (level) or counterfactual (detrended)
};

struct DidEstimate {
  DidSpec spec = DidSpec::level;
  double baseline_alpha = 0.0;
  std::map<int, DidEffect> effects;
  std::optional<LinearTrend> trend;
  std::optional<std::map<int, double>> counterfactuals;
};

// Ordinary least squares of value on year. Years are centred before solving
// the normal equations; the intercept is reported at year 0. R^2 is defined
// as 0 when the values have no variation.
inline LinearTrend ols_trend(std::span<const std::pair<int, double>> points) {
  if (points.size() < 2) throw DomainError("ols_trend: need at least 2 points");
  const double m = static_cast<double>(points.size());
  double ybar = 0.0, vbar = 0.0;
  for (const auto& [y, v] : points) {
    ybar += y;
    vbar += v;
  }
  ybar /= m;
  vbar /= m;
  double sxx = 0.0, sxy = 0.0, sst = 0.0;
  for (const auto& [y, v] : points) {
    const double dx = y - ybar;
    sxx += dx * dx;
    sxy += dx * (v - vbar);
    sst += (v - vbar) * (v - vbar);
  }
  if (sxx == 0.0) throw DomainError("ols_trend: all years identical");
  LinearTrend t;
  t.gamma1 = sxy / sxx;
  t.gamma0 = vbar - t.gamma1 * ybar;
  double ssr = 0.0;
  for (const auto& [y, v] : points) {
    const double r = v - (vbar + t.gamma1 * (y - ybar));
    ssr += r * r;
  }
  t.r_squared = sst == 0.0 ? 0.0 : 1.0 - ssr / sst;
  return t;
}

inline DidEstimate did_level(const FragilitySeries& s) {
  s.validate();
  DidEstimate est;
  est.spec = DidSpec::level;
  double acc = 0.0;
  for (int y : s.pre_years) acc += s.at(y);
  est.baseline_alpha = acc / static_cast<double>(s.pre_years.size());
  for (int y : s.post_years) {
    DidEffect e;
    e.lambda2 = s.at(y);
    e.beta = e.lambda2 - est.baseline_alpha;
    e.reference = est.baseline_alpha;
    e.pct_change = 100.0 * e.beta / e.reference;
    est.effects[y] = e;
  }
  return est;
}

// Linear trend fitted on the pre-treatment years only; effects are deviations
// from the extrapolated trend.
inline DidEstimate did_detrended(const FragilitySeries& s) {
  s.validate();
  if (s.pre_years.size() < 2) throw DomainError("did_detrended: need at least 2 pre-treatment years");
  std::vector<std::pair<int, double>> pre;
  for (int y : s.pre_years) pre.emplace_back(y, s.at(y));
  const LinearTrend trend = ols_trend(pre);

  DidEstimate est;
  est.spec = DidSpec::detrended;
  double acc = 0.0;
  for (const auto& [y, v] : pre) acc += v;
  est.baseline_alpha = acc / static_cast<double>(pre.size());
  est.trend = trend;
  est.counterfactuals.emplace();
  for (int y : s.post_years) {
    DidEffect e;
    e.lambda2 = s.at(y);
    e.reference = trend(y);
    e.beta = e.lambda2 - e.reference;
    e.pct_change = 100.0 * e.beta / e.reference;
    (*est.counterfactuals)[y] = e.reference;
    est.effects[y] = e;
  }
  return est;
}

inline DidEstimate estimate_did(const FragilitySeries& s, DidSpec spec) {
  return spec == DidSpec::level ? did_level(s) : did_detrended(s);
}

// False treatment inside the pre-period: pre-years before the false date
// form the baseline, the remaining pre-years are "treated". Actual
// post-treatment years are left out.
inline DidEstimate placebo_test(const FragilitySeries& s, int false_treatment_year) {
  if (s.pre_years.empty()) throw DomainError("placebo_test: series has no pre-treatment years");
  const auto [lo, hi] = std::minmax_element(s.pre_years.begin(), s.pre_years.end());
  if (!(false_treatment_year > *lo && false_treatment_year <= *hi))
    throw DomainError("placebo_test: false treatment year " + std::to_string(false_treatment_year) +
                      " must lie strictly inside the pre-period (" + std::to_string(*lo) + ", " +
                      std::to_string(*hi) + "]");
  FragilitySeries p;
  for (int y : s.pre_years) {
    p.points.emplace_back(y, s.at(y));
    (y < false_treatment_year ? p.pre_years : p.post_years).push_back(y);
  }
  return did_level(p);
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

// Linear interpolation between order statistics: h = (B - 1) q on sorted draws.
inline double percentile(std::vector<double> draws, double q) {
  if (draws.empty()) throw DomainError("percentile: no draws");
  std::sort(draws.begin(), draws.end());
  const double h = (static_cast<double>(draws.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, draws.size() - 1);
  return draws[lo] + (h - static_cast<double>(lo)) * (draws[hi] - draws[lo]);
}

// Two-sided percentile p-value: 2 min(#{b <= 0}/B, #{b > 0}/B).
inline double bootstrap_p_value(std::span<const double> draws) {
  if (draws.empty()) throw DomainError("bootstrap_p_value: no draws");
  const auto nonpos = static_cast<double>(std::count_if(draws.begin(), draws.end(), [](double b) { return b <= 0.0; }));
  const double bsz = static_cast<double>(draws.size());
  return 2.0 * std::min(nonpos / bsz, (bsz - nonpos) / bsz);
}

struct BootstrapConfig {
  std::size_t replications = 1000;
  std::uint64_t seed = 0;
  AllocationMethod method = AllocationMethod::equal;
  DidSpec spec = DidSpec::level;
  std::vector<int> pre_years;
  std::vector<int> post_years;
  unsigned workers = 1;
  int max_resample_retries = 100;
};

struct BootstrapResult {
  std::size_t replications = 0;
  std::uint64_t master_seed = 0;
  DidSpec spec = DidSpec::level;
  std::map<int, std::vector<double>> replicates;  // post-year -> B draws in replicate order
  std::map<int, std::pair<double, double>> ci;     // 95% percentile interval
  std::map<int, double> p_values;
  std::vector<double> alpha_draws;
};

// Resamples n_t banks with replacement. A bank drawn k times enters as k
// distinct nodes; copies carry a shared origin tag so they never allocate to
// each other.
inline double resampled_lambda2(const std::vector<BankRecord>& recs, AllocationMethod method, Stream& rng,
                                int max_retries, int year) {
  const std::size_t n = recs.size();
  std::vector<std::size_t> pick(n);
  for (int attempt = 0;; ++attempt) {
    for (auto& p : pick) p = static_cast<std::size_t>(rng.below(n));
    std::set<std::size_t> distinct(pick.begin(), pick.end());
    if (distinct.size() >= 2) break;
    if (attempt + 1 >= max_retries)
      throw DomainError("bootstrap: year " + std::to_string(year) + " kept resampling fewer than 2 distinct banks");
  }
  std::vector<BankRecord> sample;
  sample.reserve(n);
  std::map<std::size_t, int> copies;
  for (auto p : pick) {
    BankRecord r = recs[p];
    r.lei += "#" + std::to_string(copies[p]++);
    sample.push_back(std::move(r));
  }
  const auto directed = allocate(sample, method, nullptr, pick);
  return algebraic_connectivity(symmetrize(directed, year));
}

inline BootstrapResult bootstrap_did(const ExposurePanel& panel, const BootstrapConfig& cfg) {
  if (cfg.replications < 100) throw DomainError("bootstrap_did: need B >= 100");
  if (cfg.pre_years.empty() || cfg.post_years.empty())
    throw DomainError("bootstrap_did: pre and post years must be non-empty");
  if (cfg.spec == DidSpec::detrended && cfg.pre_years.size() < 2)
    throw DomainError("bootstrap_did: detrended spec needs at least 2 pre-treatment years");
  std::vector<int> years = cfg.pre_years;
  years.insert(years.end(), cfg.post_years.begin(), cfg.post_years.end());
  std::sort(years.begin(), years.end());
  for (int y : years) (void)panel.year(y);

  const std::size_t b_total = cfg.replications;
  std::vector<std::vector<double>> l2(b_total, std::vector<double>(years.size()));

  auto run_range = [&](unsigned worker, unsigned stride) {
    for (std::size_t b = worker; b < b_total; b += stride) {
      Stream rng = Stream::derived(cfg.seed, b);
      for (std::size_t k = 0; k < years.size(); ++k)
        l2[b][k] = resampled_lambda2(panel.year(years[k]), cfg.method, rng, cfg.max_resample_retries, years[k]);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.workers, static_cast<unsigned>(b_total)));
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            run_range(w, workers);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  BootstrapResult res;
  res.replications = b_total;
  res.master_seed = cfg.seed;
  res.spec = cfg.spec;
  for (std::size_t b = 0; b < b_total; ++b) {
    FragilitySeries s;
    for (std::size_t k = 0; k < years.size(); ++k) s.points.emplace_back(years[k], l2[b][k]);
    s.pre_years = cfg.pre_years;
    s.post_years = cfg.post_years;
    const auto est = estimate_did(s, cfg.spec);
    res.alpha_draws.push_back(est.baseline_alpha);
    for (const auto& [y, e] : est.effects) res.replicates[y].push_back(e.beta);
  }
  for (const auto& [y, draws] : res.replicates) {
    res.ci[y] = {percentile(draws, 0.025), percentile(draws, 0.975)};
    res.p_values[y] = bootstrap_p_value(draws);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Robustness
// ---------------------------------------------------------------------------

// Keeps only LEIs present in every year, preserving within-year order.
inline ExposurePanel balanced_panel(const ExposurePanel& panel) {
  std::set<std::string> common;
  bool first = true;
  for (int y : panel.years) {
    std::set<std::string> here;
    for (const auto& r : panel.year(y)) here.insert(r.lei);
    if (first) {
      common = std::move(here);
      first = false;
    } else {
      std::set<std::string> keep;
      std::set_intersection(common.begin(), common.end(), here.begin(), here.end(),
                            std::inserter(keep, keep.begin()));
      common = std::move(keep);
    }
  }
  if (common.empty()) throw DomainError("balanced_panel: no bank is present in every year");
  ExposurePanel out;
  out.years = panel.years;
  for (int y : panel.years) {
    auto& recs = out.records[y];
    for (const auto& r : panel.year(y))
      if (common.count(r.lei)) recs.push_back(r);
  }
  if (common.size() < 2) throw DomainError("balanced_panel: fewer than 2 banks present in every year");
  return out;
}

inline double subgroup_lambda2(const WeightedGraph& g, std::span<const std::string> members) {
  if (members.size() < 2) throw DomainError("subgroup_lambda2: need at least 2 members");
  std::vector<std::size_t> keep;
  for (const auto& m : members) {
    auto idx = g.index_of(m);
    if (!idx) throw DomainError("subgroup_lambda2: unknown member " + m);
    keep.push_back(*idx);
  }
  std::sort(keep.begin(), keep.end());
  if (std::adjacent_find(keep.begin(), keep.end()) != keep.end())
    throw DomainError("subgroup_lambda2: duplicate member");
  return algebraic_connectivity(g.induced(keep));
}

struct NetworkSnapshot {
  std::size_t n_banks = 0;
  double lambda2 = 0.0;
  double total_exposure = 0.0;
};

struct Elasticity {
  double elasticity = 0.0;            // (dλ2/λ2) / (dn/n), simple percent changes
  double predicted_elasticity = 0.0;  // -1 + log(E_b/E_a) / log(n_b/n_a)
};

inline Elasticity consolidation_elasticity(const NetworkSnapshot& a, const NetworkSnapshot& b) {
  if (a.n_banks == b.n_banks) throw DomainError("consolidation_elasticity: bank counts are equal");
  if (a.n_banks == 0 || b.n_banks == 0 || !(a.lambda2 > 0.0))
    throw DomainError("consolidation_elasticity: invalid snapshot");
  const double na = static_cast<double>(a.n_banks);
  const double nb = static_cast<double>(b.n_banks);
  Elasticity e;
  e.elasticity = ((b.lambda2 - a.lambda2) / a.lambda2) / ((nb - na) / na);
  if (a.total_exposure > 0.0 && b.total_exposure > 0.0)
    e.predicted_elasticity = -1.0 + std::log(b.total_exposure / a.total_exposure) / std::log(nb / na);
  else
    e.predicted_elasticity = std::numeric_limits<double>::quiet_NaN();
  return e;
}

// ---------------------------------------------------------------------------
// Policy calculators
// ---------------------------------------------------------------------------

struct PolicyParams {
  double kappa = 0.0;
  double alpha0 = 0.25;
  double beta = 1.0;
  double lambda2_target = 0.0;
};

struct CouplingBreach {
  std::string bank_i;
  std::string bank_j;
  double weight = 0.0;
  double limit = 0.0;
};

struct PolicyResult {
  Vector buffers;  // kappa * SC_i * RWA_i
  double alpha_t = 0.0;
  std::vector<CouplingBreach> breaches;
};

// Dynamic coupling limit alpha_t = alpha0 (lambda2_target / lambda2)^beta.
inline double dynamic_coupling_limit(double lambda2, const PolicyParams& p) {
  if (!(lambda2 > 0.0)) throw DomainError("policy: lambda2 must be positive");
  if (!(p.alpha0 >= 0.0) || !(p.beta >= 0.0)) throw DomainError("policy: alpha0 and beta must be >= 0");
  if (!(p.lambda2_target > 0.0)) throw DomainError("policy: lambda2 target must be positive");
  return p.alpha0 * std::pow(p.lambda2_target / lambda2, p.beta);
}

inline PolicyResult policy_calculators(const WeightedGraph& g, double lambda2, std::span<const double> centralities,
                                       std::span<const double> rwa, std::span<const double> capitals,
                                       const PolicyParams& p) {
  if (!(p.kappa >= 0.0)) throw DomainError("policy: kappa must be >= 0");
  const std::size_t n = g.size();
  if (centralities.size() != n || rwa.size() != n || capitals.size() != n)
    throw DomainError("policy: per-bank inputs do not match graph");
  PolicyResult r;
  r.alpha_t = dynamic_coupling_limit(lambda2, p);
  r.buffers.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.buffers[i] = p.kappa * centralities[i] * rwa[i];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double limit = r.alpha_t * std::min(capitals[i], capitals[j]);
      if (g.weights(i, j) > limit) r.breaches.push_back({g.banks[i], g.banks[j], g.weights(i, j), limit});
    }
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// Series CSV: header "year,lambda2".
inline std::vector<std::pair<int, double>> parse_series_csv(const std::string& text, const std::string& source) {
  const auto lines = split_lines(text);
  if (lines.empty() || split_csv_line(lines[0]) != std::vector<std::string>{"year", "lambda2"})
    throw ParseError(source, 1, "expected header 'year,lambda2'");
  std::vector<std::pair<int, double>> pts;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_csv_line(lines[i]);
    if (f.size() != 2) throw ParseError(source, i + 1, "expected 2 fields");
    const auto y = parse_int(f[0]);
    const auto v = parse_double(f[1]);
    if (!y) throw ParseError(source, i + 1, "column year: not an integer");
    if (!v || !std::isfinite(*v)) throw ParseError(source, i + 1, "column lambda2: not a number");
    pts.emplace_back(static_cast<int>(*y), *v);
  }
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].first == pts[i - 1].first) throw InputError(source + ": duplicate year " + std::to_string(pts[i].first));
  if (pts.empty()) throw InputError(source + ": series has no rows");
  return pts;
}

inline constexpr std::string_view kDidTableHeader = "period,lambda2,effect,pct_change,ci_lower,ci_upper,p_value";

// Rows shaped like a treatment-effect table: a baseline row followed by one
// row per post year. Bootstrap columns are blank without a bootstrap result.
// A p-value of exactly 0 is printed as "<2/B".
inline std::string did_table_csv(const DidEstimate& est, const BootstrapResult* boot = nullptr) {
  std::string out = std::string(kDidTableHeader) + "\n";
  out += "baseline," + format_double(est.baseline_alpha) + ",0,0,,,\n";
  for (const auto& [y, e] : est.effects) {
    out += std::to_string(y) + "," + format_double(e.lambda2) + "," + format_double(e.beta) + "," +
           format_double(e.pct_change) + ",";
    if (boot != nullptr && boot->ci.count(y)) {
      const auto [lo, hi] = boot->ci.at(y);
      const double p = boot->p_values.at(y);
      out += format_double(lo) + "," + format_double(hi) + ",";
      out += p == 0.0 ? "<" + format_double(2.0 / static_cast<double>(boot->replications)) : format_double(p);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json did_to_json(const DidEstimate& est) {
  nlohmann::json j;
  j["spec"] = to_string(est.spec);
  j["baseline_alpha"] = est.baseline_alpha;
  nlohmann::json effects = nlohmann::json::object();
  for (const auto& [y, e] : est.effects)
    effects[std::to_string(y)] = {{"lambda2", e.lambda2}, {"beta", e.beta}, {"pct_change", e.pct_change},
                                  {"reference", e.reference}};
  j["effects"] = effects;
  if (est.trend) j["trend"] = {{"gamma0", est.trend->gamma0}, {"gamma1", est.trend->gamma1}, {"r_squared", est.trend->r_squared}};
  if (est.counterfactuals) {
    nlohmann::json cf = nlohmann::json::object();
    for (const auto& [y, v] : *est.counterfactuals) cf[std::to_string(y)] = v;
    j["counterfactuals"] = cf;
  }
  return j;
}

inline nlohmann::json bootstrap_to_json(const BootstrapResult& r) {
  nlohmann::json j;
  j["B"] = r.replications;
  j["master_seed"] = r.master_seed;
  j["spec"] = to_string(r.spec);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [y, draws] : r.replicates)
    per[std::to_string(y)] = {{"ci_lower", r.ci.at(y).first}, {"ci_upper", r.ci.at(y).second},
                              {"p_value", r.p_values.at(y)}, {"replicates", draws}};
  j["effects"] = per;
  return j;
}

}  // namespace netfragility
