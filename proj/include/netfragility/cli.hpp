#pragma once

// Command implementations behind the netfragility CLI. Each command takes a
// RunConfig, writes its tables into the output directory and returns the
// process exit code: 0 success, 1 computation-domain error, 2 I/O or
// configuration error. Files never contain timestamps, so reruns are
// byte-identical.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "netfragility/causal_inference.hpp"
#include "netfragility/diffusion_sim.hpp"
#include "netfragility/errors.hpp"
#include "netfragility/exposure_model.hpp"
#include "netfragility/io_util.hpp"
#include "netfragility/network_builder.hpp"
#include "netfragility/spectral_engine.hpp"

namespace netfragility::cli {

struct RunConfig {
  std::string input;   // panel CSV or edge-list CSV
  std::string out = ".";
  AllocationMethod method = AllocationMethod::equal;
  std::uint64_t seed = 0;
  std::size_t bootstrap_b = 0;  // 0: no bootstrap
  double epsilon = 1.0 / std::numbers::e;
  std::string series;  // CSV of (year, lambda2) replacing network-derived values
  std::vector<int> pre_years;
  std::vector<int> post_years;
  int treatment_year = 2020;  // used when pre/post are not given
  std::vector<int> placebo_years;
  DidSpec bootstrap_spec = DidSpec::level;
  unsigned workers = 1;
  std::string scenario;
  std::optional<int> year;  // stress: network year (default: last)
  std::string synth_spec;   // synth: JSON spec file, overrides the preset
  std::string synth_preset = "composition";  // synth: composition | spectral
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitInput = 2;

// Runs a command body and maps exceptions onto exit codes.
template <typename Body>
int run_guarded(std::ostream& log, Body&& body) {
  try {
    body();
    return kExitOk;
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    log << "error: malformed JSON: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DomainError& e) {
    log << "error: " << e.what() << "\n";
    return kExitDomain;
  }
}

namespace detail {

inline std::filesystem::path prepare_out(const RunConfig& cfg) {
  std::filesystem::path out(cfg.out);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec || !std::filesystem::is_directory(out)) throw InputError("output directory not writable: " + cfg.out);
  return out;
}

inline void flush_warnings(std::ostream& log, const Diagnostics& diag) {
  for (const auto& w : diag.warnings) log << "warning: " << w << "\n";
}

inline bool is_edge_list(const std::string& text) {
  return text.rfind(std::string(kEdgeListHeader), 0) == 0;
}

inline std::string cell(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

// Networks for every year of the input: either rebuilt from a panel or read
// from an edge list. `panel` is filled only for panel inputs.
struct Networks {
  std::vector<WeightedGraph> graphs;
  std::optional<ExposurePanel> panel;
};

inline Networks load_networks(const RunConfig& cfg, std::ostream& log) {
  if (cfg.input.empty()) throw InputError("--input is required");
  if (!std::filesystem::exists(cfg.input)) throw InputError("input file not found: " + cfg.input);
  const std::string text = read_text_file(cfg.input);
  Networks nets;
  if (is_edge_list(text)) {
    nets.graphs = parse_edge_csv(text, cfg.input);
    return nets;
  }
  Diagnostics diag;
  ExposurePanel panel = parse_panel_csv(text, cfg.input, &diag);
  const std::string manifest = manifest_path_for(cfg.input);
  if (std::filesystem::exists(manifest))
    validate_manifest(panel, nlohmann::json::parse(read_text_file(manifest)));
  for (int y : panel.years) nets.graphs.push_back(build_year_network(panel, y, cfg.method, &diag).graph);
  flush_warnings(log, diag);
  nets.panel = std::move(panel);
  return nets;
}

inline void partition(const RunConfig& cfg, const std::vector<int>& years, std::vector<int>& pre,
                      std::vector<int>& post) {
  if (!cfg.pre_years.empty() || !cfg.post_years.empty()) {
    pre = cfg.pre_years;
    post = cfg.post_years;
  } else {
    for (int y : years) (y < cfg.treatment_year ? pre : post).push_back(y);
  }
  std::sort(pre.begin(), pre.end());
  std::sort(post.begin(), post.end());
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline constexpr std::string_view kStatsHeader =
    "year,n_nodes,n_edges,possible_edges,density,total_weight,mean_weight,sd_weight,min_weight,max_weight,"
    "mean_degree,sd_degree,min_degree,max_degree";

inline std::string stats_row(int year, const NetworkStats& s) {
  using detail::cell;
  return std::to_string(year) + "," + std::to_string(s.n_nodes) + "," + std::to_string(s.n_edges) + "," +
         std::to_string(s.possible_edges) + "," + cell(s.density) + "," + cell(s.total_weight) + "," +
         cell(s.mean_weight) + "," + cell(s.sd_weight) + "," + cell(s.min_weight) + "," + cell(s.max_weight) + "," +
         cell(s.mean_degree) + "," + cell(s.sd_degree) + "," + cell(s.min_degree) + "," + cell(s.max_degree) + "\n";
}

// build: per-year edge lists and adjacency JSON, network_stats.csv and
// conservation.csv.
inline int cmd_build(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return run_guarded(log, [&] {
    if (cfg.input.empty()) throw InputError("--input is required");
    Diagnostics diag;
    const ExposurePanel panel = load_panel(cfg.input, &diag);
    const std::string manifest = manifest_path_for(cfg.input);
    if (std::filesystem::exists(manifest))
      validate_manifest(panel, nlohmann::json::parse(read_text_file(manifest)));
    const auto out = detail::prepare_out(cfg);

    std::string stats = std::string(kStatsHeader) + "\n";
    std::string cons = "year,directed_total,graph_total,discrepancy,banks_ok,dropped_exposure\n";
    bool all_ok = true;
    for (int y : panel.years) {
      const auto yn = build_year_network(panel, y, cfg.method, &diag);
      const auto rep = validate_conservation(yn.graph, yn.directed, panel.year(y));
      all_ok = all_ok && rep.ok();
      for (const auto& f : rep.bank_failures)
        log << "conservation failure " << y << " " << f.lei << ": expected " << f.expected << " got " << f.actual
            << "\n";
      cons += std::to_string(y) + "," + format_double(rep.directed_total) + "," + format_double(rep.graph_total) +
              "," + format_double(rep.total_discrepancy) + "," + (rep.banks_ok ? "1" : "0") + "," +
              format_double(sum(yn.directed.dropped)) + "\n";
      stats += stats_row(y, network_stats(yn.graph));
      write_text_file((out / ("graph_" + std::to_string(y) + ".csv")).string(), graph_to_edge_csv(yn.graph));
      write_text_file((out / ("graph_" + std::to_string(y) + ".json")).string(), graph_to_json(yn.graph));
    }
    write_text_file((out / "network_stats.csv").string(), stats);
    write_text_file((out / "conservation.csv").string(), cons);
    detail::flush_warnings(log, diag);
    if (!all_ok) throw DomainError("exposure conservation check failed");
  });
}

inline constexpr std::string_view kFragilityHeader =
    "year,n_nodes,connected,lambda2,inv_lambda2_x1e3,spectral_gap,lambda3,lambda_n,radius_ratio,"
    "effective_resistance,normalized_lambda2,avg_resistance_distance,mixing_time";

// analyze: fragility.csv (one row per year), centrality.csv and spectrum_<year>.json.
inline int cmd_analyze(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return run_guarded(log, [&] {
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) throw InputError("--epsilon must lie in (0, 1)");
    using detail::cell;
    std::string frag = std::string(kFragilityHeader) + "\n";

    if (!cfg.series.empty()) {
      const auto pts = parse_series_csv(read_text_file(cfg.series), cfg.series);
      const auto out = detail::prepare_out(cfg);
      for (const auto& [y, l2] : pts) {
        const bool conn = l2 > 0.0;
        frag += std::to_string(y) + ",," + (conn ? "1" : "0") + "," + cell(l2) + "," +
                (conn ? cell(1000.0 / l2) : "inf") + "," + cell(l2) + ",,,,,,," +
                (conn ? cell(mixing_time(l2, cfg.epsilon)) : "inf") + "\n";
      }
      write_text_file((out / "fragility.csv").string(), frag);
      return;
    }

    const auto nets = detail::load_networks(cfg, log);
    const auto out = detail::prepare_out(cfg);
    std::string cent = "year,bank,spectral_centrality\n";
    for (const auto& g : nets.graphs) {
      const auto m = fragility_metrics(g);
      if (!m.connected) log << "note: year " << g.year << " network is disconnected (lambda2 = 0)\n";
      frag += std::to_string(g.year) + "," + std::to_string(g.size()) + "," + (m.connected ? "1" : "0") + "," +
              cell(m.lambda2) + "," + (m.connected ? cell(1000.0 / m.lambda2) : "inf") + "," + cell(m.spectral_gap) +
              "," + cell(m.lambda3) + "," + cell(m.spectral_radius) + "," + cell(m.radius_ratio) + "," +
              cell(m.effective_resistance) + "," + cell(m.normalized_lambda2) + "," +
              cell(m.avg_resistance_distance) + "," + (m.connected ? cell(mixing_time(m.lambda2, cfg.epsilon)) : "inf") +
              "\n";
      write_text_file((out / ("spectrum_" + std::to_string(g.year) + ".json")).string(),
                      spectrum_to_json(spectrum(laplacian(g), false)));
      if (g.size() < 3) {
        log << "note: year " << g.year << " has n = " << g.size()
            << " < 3 banks; spectral centrality table not produced\n";
        continue;
      }
      const Vector sc = spectral_centralities(g);
      for (std::size_t i = 0; i < g.size(); ++i)
        cent += std::to_string(g.year) + "," + csv_escape(g.banks[i]) + "," + cell(sc[i]) + "\n";
    }
    write_text_file((out / "fragility.csv").string(), frag);
    write_text_file((out / "centrality.csv").string(), cent);
  });
}

// did: did_level.csv, did_detrended.csv, placebo.csv and did.json.
inline int cmd_did(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return run_guarded(log, [&] {
    std::vector<std::pair<int, double>> pts;
    std::optional<ExposurePanel> panel;
    if (!cfg.series.empty()) {
      if (!std::filesystem::exists(cfg.series)) throw InputError("series file not found: " + cfg.series);
      pts = parse_series_csv(read_text_file(cfg.series), cfg.series);
      if (!cfg.input.empty() && cfg.bootstrap_b > 0) {
        Diagnostics diag;
        panel = load_panel(cfg.input, &diag);
        detail::flush_warnings(log, diag);
      }
    } else {
      auto nets = detail::load_networks(cfg, log);
      for (const auto& g : nets.graphs) pts.emplace_back(g.year, algebraic_connectivity(g));
      panel = std::move(nets.panel);
    }
    std::vector<int> years;
    for (const auto& [y, v] : pts) years.push_back(y);

    FragilitySeries series;
    series.points = pts;
    detail::partition(cfg, years, series.pre_years, series.post_years);
    const auto level = did_level(series);
    std::optional<DidEstimate> detrended;
    if (series.pre_years.size() >= 2) detrended = did_detrended(series);

    std::optional<BootstrapResult> boot;
    if (cfg.bootstrap_b > 0) {
      if (!panel) throw InputError("bootstrap needs a bank-level panel via --input");
      BootstrapConfig bc;
      bc.replications = cfg.bootstrap_b;
      bc.seed = cfg.seed;
      bc.method = cfg.method;
      bc.spec = cfg.bootstrap_spec;
      bc.pre_years = series.pre_years;
      bc.post_years = series.post_years;
      bc.workers = cfg.workers;
      boot = bootstrap_did(*panel, bc);
    }

    const auto out = detail::prepare_out(cfg);
    const BootstrapResult* level_boot = boot && boot->spec == DidSpec::level ? &*boot : nullptr;
    const BootstrapResult* trend_boot = boot && boot->spec == DidSpec::detrended ? &*boot : nullptr;
    write_text_file((out / "did_level.csv").string(), did_table_csv(level, level_boot));
    if (detrended) write_text_file((out / "did_detrended.csv").string(), did_table_csv(*detrended, trend_boot));

    nlohmann::json doc;
    doc["series"] = nlohmann::json::array();
    for (const auto& [y, v] : pts) doc["series"].push_back({{"year", y}, {"lambda2", v}});
    doc["pre_years"] = series.pre_years;
    doc["post_years"] = series.post_years;
    doc["level"] = did_to_json(level);
    if (detrended) doc["detrended"] = did_to_json(*detrended);
    if (boot) doc["bootstrap"] = bootstrap_to_json(*boot);

    std::string placebo = "false_year,period,lambda2,effect\n";
    doc["placebo"] = nlohmann::json::array();
    for (int fy : cfg.placebo_years) {
      const auto p = placebo_test(series, fy);
      placebo += std::to_string(fy) + ",baseline," + format_double(p.baseline_alpha) + ",0\n";
      for (const auto& [y, e] : p.effects)
        placebo += std::to_string(fy) + "," + std::to_string(y) + "," + format_double(e.lambda2) + "," +
                   format_double(e.beta) + "\n";
      auto pj = did_to_json(p);
      pj["false_treatment_year"] = fy;
      doc["placebo"].push_back(pj);
    }
    write_text_file((out / "placebo.csv").string(), placebo);
    write_text_file((out / "did.json").string(), doc.dump(2) + "\n");
  });
}

// Scenario JSON: {"shock": {bank: rate}, "onset": t0, "horizon": T, "dt": dt,
// "capitals": {bank: amount}}. Banks missing from "shock" get no forcing;
// banks missing from "capitals" fall back to the panel's capital figure.
struct Scenario {
  std::map<std::string, double> shock;
  std::map<std::string, double> capitals;
  double onset = 0.0;
  double horizon = 0.0;
  double dt = 0.0;
};

inline Scenario parse_scenario(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Scenario s;
  if (!j.is_object()) throw InputError("scenario: expected a JSON object");
  for (const char* key : {"shock", "horizon", "dt"})
    if (!j.contains(key)) throw InputError(std::string("scenario: missing '") + key + "'");
  s.shock = j.at("shock").get<std::map<std::string, double>>();
  if (j.contains("capitals")) s.capitals = j.at("capitals").get<std::map<std::string, double>>();
  s.onset = j.value("onset", 0.0);
  s.horizon = j.at("horizon").get<double>();
  s.dt = j.at("dt").get<double>();
  return s;
}

inline nlohmann::json cascade_to_json(const CascadeResult& r) {
  nlohmann::json j;
  j["total_failures"] = r.total_failures;
  j["rounds"] = r.rounds;
  j["windows"] = r.windows;
  j["pre_lambda2"] = r.pre_lambda2;
  j["post_lambda2"] = r.post_lambda2;
  j["fragility_change"] = r.fragility_change;
  j["stabilization_time"] = r.stabilization_time;
  j["total_losses"] = r.total_losses;
  j["survivors"] = r.survivors;
  j["timeline"] = nlohmann::json::array();
  for (const auto& f : r.failed)
    j["timeline"].push_back({{"round", f.round}, {"window", f.window}, {"time", f.time}, {"bank", f.bank},
                             {"distress", f.distress}, {"capital", f.capital}});
  return j;
}

// stress: cascade.json, cascade_summary.csv and trajectory.csv.
inline int cmd_stress(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return run_guarded(log, [&] {
    if (cfg.scenario.empty()) throw InputError("--scenario is required");
    if (!std::filesystem::exists(cfg.scenario)) throw InputError("scenario file not found: " + cfg.scenario);
    const Scenario sc = parse_scenario(read_text_file(cfg.scenario));
    const auto nets = detail::load_networks(cfg, log);
    if (nets.graphs.empty()) throw InputError("input has no networks");

    const WeightedGraph* g = &nets.graphs.back();
    if (cfg.year) {
      g = nullptr;
      for (const auto& cand : nets.graphs)
        if (cand.year == *cfg.year) g = &cand;
      if (g == nullptr) throw InputError("input has no year " + std::to_string(*cfg.year));
    }

    const std::size_t n = g->size();
    ForcingSpec shock{Vector(n, 0.0), sc.onset};
    for (const auto& [bank, v] : sc.shock) {
      auto idx = g->index_of(bank);
      if (!idx) throw InputError("scenario: unknown bank in shock: " + bank);
      shock.vector[*idx] = v;
    }
    Vector capitals(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (auto it = sc.capitals.find(g->banks[i]); it != sc.capitals.end()) {
        capitals[i] = it->second;
      } else if (nets.panel) {
        for (const auto& r : nets.panel->year(g->year))
          if (r.lei == g->banks[i]) capitals[i] = r.capital;
      } else {
        throw InputError("scenario: no capital for bank " + g->banks[i]);
      }
    }
    for (const auto& [bank, v] : sc.capitals)
      if (!g->index_of(bank)) throw InputError("scenario: unknown bank in capitals: " + bank);

    const auto res = cascade_stress_test(*g, capitals, shock, sc.horizon, sc.dt, true);
    const auto out = detail::prepare_out(cfg);
    write_text_file((out / "cascade.json").string(), cascade_to_json(res).dump(2) + "\n");
    write_text_file((out / "cascade_summary.csv").string(),
                    "failures,total_losses,pre_lambda2,post_lambda2,fragility_change,rounds,stabilization_time\n" +
                        std::to_string(res.total_failures) + "," + format_double(res.total_losses) + "," +
                        format_double(res.pre_lambda2) + "," + format_double(res.post_lambda2) + "," +
                        format_double(res.fragility_change) + "," + std::to_string(res.rounds) + "," +
                        format_double(res.stabilization_time) + "\n");
    std::string traj = "time";
    for (const auto& b : g->banks) traj += "," + csv_escape(b);
    traj += "\n";
    for (std::size_t k = 0; k < res.grid.size(); ++k) {
      traj += format_double(res.grid[k]);
      for (double v : res.trajectory[k]) traj += "," + detail::cell(v);
      traj += "\n";
    }
    write_text_file((out / "trajectory.csv").string(), traj);
    log << "stress: " << res.total_failures << " failure(s), delta lambda2 = " << res.fragility_change << "\n";
  });
}

inline SynthSpec parse_synth_spec(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  SynthSpec s;
  s.persistent_banks = j.value("persistent_banks", std::size_t{0});
  for (const auto& y : j.at("years")) {
    SynthYear sy;
    sy.year = y.at("year").get<int>();
    sy.n_banks = y.at("n_banks").get<std::size_t>();
    sy.total_exposure = y.at("total_exposure").get<double>();
    sy.countries = y.at("countries").get<std::vector<std::string>>();
    sy.exposure_cv = y.value("exposure_cv", 1.0);
    sy.share_sigma = y.value("share_sigma", 0.75);
    sy.gravity_shares = y.value("gravity_shares", false);
    s.years.push_back(std::move(sy));
  }
  return s;
}

// synth: panel.csv and panel.manifest.json.
inline int cmd_synth(const RunConfig& cfg, std::ostream& log = std::cerr) {
  return run_guarded(log, [&] {
    SynthSpec spec;
    if (cfg.synth_preset == "composition") {
      spec = composition_spec();
    } else if (cfg.synth_preset == "spectral") {
      spec = spectral_level_spec();
    } else {
      throw InputError("unknown synth preset: " + cfg.synth_preset);
    }
    if (!cfg.synth_spec.empty()) {
      if (!std::filesystem::exists(cfg.synth_spec)) throw InputError("spec file not found: " + cfg.synth_spec);
      spec = parse_synth_spec(read_text_file(cfg.synth_spec));
    }
    const ExposurePanel panel = synthesize_panel(spec, cfg.seed);
    const auto out = detail::prepare_out(cfg);
    write_panel(panel, (out / "panel.csv").string());
    write_text_file((out / "panel.manifest.json").string(), panel_manifest(panel).dump(2) + "\n");
    log << "synth: wrote " << panel.years.size() << " year(s) to " << (out / "panel.csv").string() << "\n";
  });
}

}  // namespace netfragility::cli
