// netfragility: build interbank networks, measure spectral fragility, estimate
// treatment effects and run cascade stress tests.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "netfragility/cli.hpp"

namespace nf = netfragility;

int main(int argc, char** argv) {
  CLI::App app{"Spectral fragility analysis of interbank exposure networks"};
  app.require_subcommand(1);
  nf::cli::RunConfig cfg;

  std::string method = "equal";
  std::string boot_spec = "level";
  int year = 0;

  app.add_option("--input", cfg.input, "Panel CSV or edge-list CSV");
  app.add_option("--out", cfg.out, "Output directory")->capture_default_str();
  app.add_option("--method", method, "Counterparty allocation")
      ->check(CLI::IsMember({"equal", "size", "exposure"}))
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Master seed for synthesis and bootstrap")->capture_default_str();
  app.add_option("--bootstrap-b", cfg.bootstrap_b, "Bootstrap replications (0 disables)")->capture_default_str();
  app.add_option("--epsilon", cfg.epsilon, "Mixing-time tolerance in (0, 1)")->capture_default_str();
  app.add_option("--series", cfg.series, "CSV of year,lambda2 overriding network-derived values");
  app.add_option("--workers", cfg.workers, "Bootstrap worker threads")->capture_default_str();

  auto* build = app.add_subcommand("build", "Allocate exposures and write per-year networks");
  auto* analyze = app.add_subcommand("analyze", "Spectral fragility metrics per year");
  auto* did = app.add_subcommand("did", "Difference-in-differences estimates");
  did->add_option("--pre", cfg.pre_years, "Pre-treatment years");
  did->add_option("--post", cfg.post_years, "Post-treatment years");
  did->add_option("--treatment-year", cfg.treatment_year, "First treated year when --pre/--post are absent")
      ->capture_default_str();
  did->add_option("--placebo", cfg.placebo_years, "False treatment years for placebo tests");
  did->add_option("--bootstrap-spec", boot_spec, "Specification resampled by the bootstrap")
      ->check(CLI::IsMember({"level", "detrended"}))
      ->capture_default_str();
  auto* stress = app.add_subcommand("stress", "Diffusion cascade under a shock scenario");
  stress->add_option("--scenario", cfg.scenario, "Scenario JSON")->required();
  auto* year_opt = stress->add_option("--year", year, "Network year (default: last)");
  auto* synth = app.add_subcommand("synth", "Generate a calibrated synthetic panel");
  synth->add_option("--spec", cfg.synth_spec, "Synthesis spec JSON (overrides --preset)");
  synth->add_option("--preset", cfg.synth_preset, "Built-in calibration")
      ->check(CLI::IsMember({"composition", "spectral"}));

  // Global options may also follow the subcommand.
  for (auto* sub : {build, analyze, did, stress, synth}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : nf::cli::kExitInput;
  }

  cfg.method = nf::parse_allocation_method(method);
  cfg.bootstrap_spec = nf::parse_did_spec(boot_spec);
  if (year_opt->count() > 0) cfg.year = year;

  if (*build) return nf::cli::cmd_build(cfg);
  if (*analyze) return nf::cli::cmd_analyze(cfg);
  if (*did) return nf::cli::cmd_did(cfg);
  if (*stress) return nf::cli::cmd_stress(cfg);
  if (*synth) return nf::cli::cmd_synth(cfg);
  return nf::cli::kExitInput;
}
