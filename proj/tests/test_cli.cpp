#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "netfragility/cli.hpp"
#include "oracles.hpp"

using namespace netfragility;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

// Returns the lines of a CSV file as split rows.
std::vector<std::vector<std::string>> rows(const fs::path& p) {
  std::vector<std::vector<std::string>> out;
  for (const auto& l : split_lines(slurp(p)))
    if (!l.empty()) out.push_back(split_csv_line(l));
  return out;
}

cli::RunConfig synth_panel(const fs::path& dir, std::uint64_t seed = 42) {
  cli::RunConfig cfg;
  cfg.out = (dir / "data").string();
  cfg.seed = seed;
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_synth(cfg, log), 0) << log.str();
  cli::RunConfig next;
  next.input = (dir / "data" / "panel.csv").string();
  return next;
}

void write_series(const fs::path& p, const std::vector<std::pair<int, double>>& pts) {
  std::string s = "year,lambda2\n";
  for (const auto& [y, v] : pts) s += std::to_string(y) + "," + format_double(v) + "\n";
  write_text_file(p.string(), s);
}

const std::vector<std::pair<int, double>> kPublished{
    {2014, 1322.87}, {2016, 1797.59}, {2018, 2037.42}, {2021, 2007.23}, {2023, 2181.96}};

}  // namespace

TEST(CliBuild, SyntheticPanelIsDenseEveryYear) {
  const auto dir = oracle::scratch_dir("cli_build");
  auto cfg = synth_panel(dir);
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_build(cfg, log), 0) << log.str();
  const auto stats = rows(dir / "out" / "network_stats.csv");
  ASSERT_EQ(stats.size(), 6u);
  EXPECT_EQ(stats[0][4], "density");
  for (std::size_t r = 1; r < stats.size(); ++r) EXPECT_EQ(stats[r][4], "1");
  for (int y : {2014, 2016, 2018, 2021, 2023}) {
    EXPECT_TRUE(fs::exists(dir / "out" / ("graph_" + std::to_string(y) + ".csv")));
    EXPECT_TRUE(fs::exists(dir / "out" / ("graph_" + std::to_string(y) + ".json")));
  }
  for (const auto& r : rows(dir / "out" / "conservation.csv")) {
    if (r[0] == "year") continue;
    EXPECT_EQ(r[4], "1");
  }
}

TEST(CliBuild, TwoBankFixtureAndIdempotence) {
  const auto dir = oracle::scratch_dir("cli_build2");
  write_text_file((dir / "p.csv").string(),
                  std::string(kPanelHeader) +
                      "\n2014,AAAAAAAAAAAAAAAAAA01,A,DE,100,10,FR,10\n2014,BBBBBBBBBBBBBBBBBB02,B,FR,50,5,DE,4\n");
  cli::RunConfig cfg;
  cfg.input = (dir / "p.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_build(cfg, log), 0);
  const auto edges = rows(dir / "out" / "graph_2014.csv");
  ASSERT_EQ(edges.size(), 2u);
  EXPECT_EQ(edges[1][3], "7");
  const std::string first = slurp(dir / "out" / "network_stats.csv");
  ASSERT_EQ(cli::cmd_build(cfg, log), 0);
  EXPECT_EQ(slurp(dir / "out" / "network_stats.csv"), first);
}

TEST(CliBuild, MissingInputExitsTwoNamingPath) {
  cli::RunConfig cfg;
  cfg.input = "/definitely/missing/panel.csv";
  cfg.out = oracle::scratch_dir("cli_missing").string();
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_build(cfg, log), 2);
  EXPECT_NE(log.str().find("/definitely/missing/panel.csv"), std::string::npos);
  EXPECT_EQ(cli::cmd_analyze(cfg, log), 2);
  EXPECT_EQ(cli::cmd_did(cfg, log), 2);
}

TEST(CliBuild, ParseErrorExitsTwoWithLine) {
  const auto dir = oracle::scratch_dir("cli_parse");
  write_text_file((dir / "p.csv").string(),
                  std::string(kPanelHeader) +
                      "\n2014,AAAAAAAAAAAAAAAAAA01,A,DE,100,10,FR,10\n2014,BBBBBBBBBBBBBBBBBB02,B,FR,50,5,DE,-4\n");
  cli::RunConfig cfg;
  cfg.input = (dir / "p.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_build(cfg, log), 2);
  EXPECT_NE(log.str().find("p.csv:3"), std::string::npos);
}

TEST(CliBuild, ManifestMismatchRejected) {
  const auto dir = oracle::scratch_dir("cli_manifest");
  auto cfg = synth_panel(dir);
  auto m = nlohmann::json::parse(slurp(dir / "data" / "panel.manifest.json"));
  m["years"][1]["n_banks"] = 99;
  write_text_file((dir / "data" / "panel.manifest.json").string(), m.dump());
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_build(cfg, log), 2);
  EXPECT_NE(log.str().find("manifest"), std::string::npos);
}

TEST(CliAnalyze, UniformCompleteRow) {
  const auto dir = oracle::scratch_dir("cli_analyze");
  auto g = oracle::complete_graph(4, 1.0);
  g.year = 2020;
  write_text_file((dir / "g.csv").string(), graph_to_edge_csv(g));
  cli::RunConfig cfg;
  cfg.input = (dir / "g.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_analyze(cfg, log), 0) << log.str();
  const auto t = rows(dir / "out" / "fragility.csv");
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].size(), t[1].size());
  auto col = [&](const std::string& name) {
    const auto it = std::find(t[0].begin(), t[0].end(), name);
    return std::stod(t[1][static_cast<std::size_t>(it - t[0].begin())]);
  };
  EXPECT_NEAR(col("lambda2"), 4.0, 1e-12);
  EXPECT_NEAR(col("effective_resistance"), 0.75, 1e-12);
  EXPECT_NEAR(col("radius_ratio"), 1.0, 1e-12);
  EXPECT_NEAR(col("mixing_time"), 0.25, 1e-12);
  const auto sc = rows(dir / "out" / "centrality.csv");
  ASSERT_EQ(sc.size(), 5u);
  EXPECT_NEAR(std::stod(sc[1][2]), 1.0, 1e-12);
}

TEST(CliAnalyze, SeriesInverseColumn) {
  const auto dir = oracle::scratch_dir("cli_series");
  write_series(dir / "s.csv", kPublished);
  cli::RunConfig cfg;
  cfg.series = (dir / "s.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_analyze(cfg, log), 0) << log.str();
  const auto t = rows(dir / "out" / "fragility.csv");
  const std::vector<double> expected{0.756, 0.556, 0.491, 0.498, 0.458};
  ASSERT_EQ(t.size(), 6u);
  for (std::size_t r = 1; r < 6; ++r) EXPECT_NEAR(std::stod(t[r][4]), expected[r - 1], 0.001);
}

TEST(CliAnalyze, TwoNodeRefusesCentrality) {
  const auto dir = oracle::scratch_dir("cli_two");
  Matrix w = Matrix::square(2);
  w(0, 1) = w(1, 0) = 3;
  write_text_file((dir / "g.csv").string(), graph_to_edge_csv(make_graph(w, {"A", "B"}, 2014)));
  cli::RunConfig cfg;
  cfg.input = (dir / "g.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_analyze(cfg, log), 0);
  EXPECT_NE(log.str().find("n = 2 < 3"), std::string::npos);
  EXPECT_EQ(rows(dir / "out" / "centrality.csv").size(), 1u);
}

TEST(CliAnalyze, BadEpsilonIsConfigError) {
  cli::RunConfig cfg;
  cfg.epsilon = 1.5;
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_analyze(cfg, log), 2);
}

TEST(CliDid, PublishedSeriesTables) {
  const auto dir = oracle::scratch_dir("cli_did");
  write_series(dir / "s.csv", kPublished);
  cli::RunConfig cfg;
  cfg.series = (dir / "s.csv").string();
  cfg.out = (dir / "out").string();
  cfg.placebo_years = {2016, 2017};
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_did(cfg, log), 0) << log.str();
  const auto level = rows(dir / "out" / "did_level.csv");
  ASSERT_EQ(level.size(), 4u);
  EXPECT_NEAR(std::stod(level[1][1]), 1719.29, 0.01);
  EXPECT_NEAR(std::stod(level[2][2]), 287.93, 0.02);
  EXPECT_NEAR(std::stod(level[3][2]), 462.67, 0.02);
  EXPECT_NEAR(std::stod(level[2][3]), 16.7, 0.1);
  EXPECT_NEAR(std::stod(level[3][3]), 26.9, 0.1);
  EXPECT_TRUE(fs::exists(dir / "out" / "did_detrended.csv"));
  const auto placebo = rows(dir / "out" / "placebo.csv");
  bool saw16 = false, saw17 = false;
  for (const auto& r : placebo) {
    if (r[0] == "2016" && r[1] == "2016") saw16 = std::abs(std::stod(r[3]) - 474.72) < 1e-6;
    if (r[0] == "2017" && r[1] == "2018") saw17 = std::abs(std::stod(r[3]) - 477.19) < 1e-6;
  }
  EXPECT_TRUE(saw16);
  EXPECT_TRUE(saw17);
}

TEST(CliDid, ConstantSeriesZeroEffects) {
  const auto dir = oracle::scratch_dir("cli_did_flat");
  write_series(dir / "s.csv", {{2014, 5}, {2016, 5}, {2018, 5}, {2021, 5}, {2023, 5}});
  cli::RunConfig cfg;
  cfg.series = (dir / "s.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_did(cfg, log), 0);
  const auto level = rows(dir / "out" / "did_level.csv");
  EXPECT_EQ(level[2][2], "0");
  EXPECT_EQ(level[3][2], "0");
}

TEST(CliDid, PartitionErrorsAreDomainErrors) {
  const auto dir = oracle::scratch_dir("cli_did_err");
  write_series(dir / "s.csv", kPublished);
  cli::RunConfig cfg;
  cfg.series = (dir / "s.csv").string();
  cfg.out = (dir / "out").string();
  cfg.pre_years = {2014};
  cfg.post_years = {2030};
  std::ostringstream log;
  EXPECT_EQ(cli::cmd_did(cfg, log), 1);
  cfg.pre_years.clear();
  cfg.post_years.clear();
  cfg.bootstrap_b = 200;
  EXPECT_EQ(cli::cmd_did(cfg, log), 2);  // bootstrap without a panel
}

TEST(CliDid, BootstrapFromPanelIsIdempotent) {
  const auto dir = oracle::scratch_dir("cli_did_boot");
  auto cfg = synth_panel(dir);
  cfg.out = (dir / "out").string();
  cfg.bootstrap_b = 100;
  cfg.seed = 7;
  cfg.workers = 2;
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_did(cfg, log), 0) << log.str();
  const std::string first = slurp(dir / "out" / "did.json");
  const auto level = rows(dir / "out" / "did_level.csv");
  EXPECT_FALSE(level[2][4].empty());
  ASSERT_EQ(cli::cmd_did(cfg, log), 0);
  EXPECT_EQ(slurp(dir / "out" / "did.json"), first);
}

TEST(CliStress, Scenarios) {
  const auto dir = oracle::scratch_dir("cli_stress");
  auto g = oracle::complete_graph(4, 1.0);
  g.year = 2023;
  write_text_file((dir / "g.csv").string(), graph_to_edge_csv(g));
  cli::RunConfig cfg;
  cfg.input = (dir / "g.csv").string();
  std::ostringstream log;

  write_text_file((dir / "calm.json").string(),
                  R"({"shock": {"B0": 1}, "onset": 0, "horizon": 2, "dt": 0.1,
                      "capitals": {"B0": 10, "B1": 10, "B2": 10, "B3": 10}})");
  cfg.scenario = (dir / "calm.json").string();
  cfg.out = (dir / "calm").string();
  ASSERT_EQ(cli::cmd_stress(cfg, log), 0) << log.str();
  EXPECT_EQ(rows(dir / "calm" / "cascade_summary.csv")[1][0], "0");
  EXPECT_EQ(rows(dir / "calm" / "trajectory.csv").size(), 21u);

  write_text_file((dir / "one.json").string(),
                  R"({"shock": {"B0": 40}, "onset": 0, "horizon": 1, "dt": 0.1,
                      "capitals": {"B0": 1, "B1": 10, "B2": 10, "B3": 10}})");
  cfg.scenario = (dir / "one.json").string();
  cfg.out = (dir / "one").string();
  ASSERT_EQ(cli::cmd_stress(cfg, log), 0) << log.str();
  const auto timeline = nlohmann::json::parse(slurp(dir / "one" / "cascade.json"));
  ASSERT_EQ(timeline["timeline"].size(), 1u);
  EXPECT_EQ(timeline["timeline"][0]["bank"], "B0");
  const std::string first = slurp(dir / "one" / "cascade.json");
  ASSERT_EQ(cli::cmd_stress(cfg, log), 0);
  EXPECT_EQ(slurp(dir / "one" / "cascade.json"), first);
}

TEST(CliStress, MalformedScenarios) {
  const auto dir = oracle::scratch_dir("cli_stress_bad");
  auto g = oracle::complete_graph(3, 1.0);
  write_text_file((dir / "g.csv").string(), graph_to_edge_csv(g));
  cli::RunConfig cfg;
  cfg.input = (dir / "g.csv").string();
  cfg.out = (dir / "out").string();
  std::ostringstream log;
  for (const char* body : {R"({"shock": {"B0": 1}})", R"({not json)", R"({"shock": {"ZZ": 1}, "horizon": 1, "dt": 0.1,
                           "capitals": {"B0": 1, "B1": 1, "B2": 1}})",
                           R"({"shock": {"B0": 1}, "horizon": 1, "dt": 0.1})"}) {
    write_text_file((dir / "s.json").string(), body);
    cfg.scenario = (dir / "s.json").string();
    EXPECT_EQ(cli::cmd_stress(cfg, log), 2) << body;
  }
  write_text_file((dir / "s.json").string(),
                  R"({"shock": {"B0": 1}, "horizon": 1, "dt": -0.1, "capitals": {"B0": 1, "B1": 1, "B2": 1}})");
  EXPECT_EQ(cli::cmd_stress(cfg, log), 1);
}

TEST(CliSynth, DeterministicOutput) {
  const auto dir = oracle::scratch_dir("cli_synth");
  cli::RunConfig cfg;
  cfg.seed = 11;
  cfg.out = (dir / "a").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_synth(cfg, log), 0);
  cfg.out = (dir / "b").string();
  ASSERT_EQ(cli::cmd_synth(cfg, log), 0);
  EXPECT_EQ(slurp(dir / "a" / "panel.csv"), slurp(dir / "b" / "panel.csv"));
  EXPECT_EQ(slurp(dir / "a" / "panel.manifest.json"), slurp(dir / "b" / "panel.manifest.json"));

  write_text_file((dir / "spec.json").string(),
                  R"({"years": [{"year": 2020, "n_banks": 2, "total_exposure": 10, "countries": ["DE", "FR"]}]})");
  cfg.synth_spec = (dir / "spec.json").string();
  cfg.out = (dir / "c").string();
  ASSERT_EQ(cli::cmd_synth(cfg, log), 0);
  const auto p = load_panel((dir / "c" / "panel.csv").string());
  EXPECT_EQ(p.year(2020).size(), 2u);

  write_text_file((dir / "bad.json").string(),
                  R"({"years": [{"year": 2020, "n_banks": 1, "total_exposure": 10, "countries": ["DE"]}]})");
  cfg.synth_spec = (dir / "bad.json").string();
  EXPECT_EQ(cli::cmd_synth(cfg, log), 2);
}

TEST(CliSynth, SpectralPresetTracksPublishedLevels) {
  const auto dir = oracle::scratch_dir("cli_synth_preset");
  cli::RunConfig cfg;
  cfg.seed = 3;
  cfg.synth_preset = "spectral";
  cfg.out = (dir / "data").string();
  std::ostringstream log;
  ASSERT_EQ(cli::cmd_synth(cfg, log), 0) << log.str();
  cfg.input = (dir / "data" / "panel.csv").string();
  cfg.out = (dir / "out").string();
  ASSERT_EQ(cli::cmd_analyze(cfg, log), 0) << log.str();
  const std::map<std::string, double> published{
      {"2014", 1322.87}, {"2016", 1797.59}, {"2018", 2037.42}, {"2021", 2007.23}, {"2023", 2181.96}};
  for (const auto& r : rows(dir / "out" / "fragility.csv")) {
    if (r[0] == "year") continue;
    EXPECT_NEAR(std::stod(r[3]) / published.at(r[0]), 1.0, 0.15) << r[0];
  }
  cfg.synth_preset = "nope";
  EXPECT_EQ(cli::cmd_synth(cfg, log), 2);
}
