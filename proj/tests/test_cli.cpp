#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

#include "psmed/cli/commands.hpp"

using namespace psmed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("psmed_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_json(const fs::path& p, const json& j) {
  std::ofstream(p) << j.dump(2);
  return p;
}

fs::path write_data(const fs::path& p, const Dataset& d) {
  std::ofstream out(p, std::ios::binary);
  write_dataset_csv(d, out);
  return p;
}

int run(const std::string& cmd, const fs::path& cfg, const fs::path& out = {}, std::optional<std::uint64_t> seed = {}) {
  std::ostringstream err;
  return cli::run_command(cmd, cfg.string(), out.string(), seed, err);
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(PSMED_CLI) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// rows of a CSV as maps from header to field
std::vector<std::map<std::string, std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  auto split = [](const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string x;
    while (std::getline(ss, x, ',')) f.push_back(x);
    if (!s.empty() && s.back() == ',') f.emplace_back();
    return f;
  };
  const auto head = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    const auto f = split(line);
    std::map<std::string, std::string> r;
    for (std::size_t i = 0; i < head.size() && i < f.size(); ++i) r[head[i]] = f[i];
    rows.push_back(r);
  }
  return rows;
}

json data_block(const fs::path& csv) {
  return {{"path", csv.filename().string()}, {"columns", {{"x", {"x1", "x2", "x3", "x4"}}}}};
}

json estimate_config(const fs::path& csv) {
  return {{"command", "estimate"}, {"data", data_block(csv)}, {"methods", {"mr", "np"}}, {"B", 60}, {"V", 3},
          {"seed", 7},             {"learners", {{"candidates", {"glm"}}}}};
}

}  // namespace

TEST(Cli, EstimateWritesMultiplyRobustAndCrossFitRows) {
  const fs::path dir = scratch("estimate");
  const fs::path csv = write_data(dir / "data.csv", simulate(600, 3));
  const fs::path cfg = write_json(dir / "cfg.json", estimate_config(csv));
  ASSERT_EQ(run("estimate", cfg, dir / "out"), cli::kOk);
  const auto rows = read_rows(dir / "out" / "results.csv");
  bool mr = false, np = false;
  for (const auto& r : rows) {
    if (r.at("estimand") != "PNDE_10") continue;
    if (r.at("method") == "mr") mr = r.at("inference") == "bootstrap_percentile" && r.at("status") == "ok";
    if (r.at("method") == "np") np = r.at("inference") == "eif_wald" && r.at("status") == "ok";
  }
  EXPECT_TRUE(mr);
  EXPECT_TRUE(np);
  const json meta = json::parse(slurp(dir / "out" / "metadata.json"));
  for (const char* k : {"seed", "B", "V", "level", "knobs", "data", "clip_counts", "fits", "folds", "fold_plan_hash", "config"})
    EXPECT_TRUE(meta.contains(k)) << k;
  for (const char* k : {"clip_floor", "clip_strict", "max_density_ratio", "quadrature_nodes", "irls_tolerance", "irls_max_iterations",
                        "irls_step_halvings", "irls_ridge"})
    EXPECT_TRUE(meta.at("knobs").contains(k)) << k;
}

TEST(Cli, RerunsAreByteIdentical) {
  const fs::path dir = scratch("rerun");
  const fs::path csv = write_data(dir / "data.csv", simulate(500, 4));
  const fs::path cfg = write_json(dir / "cfg.json", estimate_config(csv));
  ASSERT_EQ(run("estimate", cfg, dir / "a"), cli::kOk);
  ASSERT_EQ(run("estimate", cfg, dir / "b"), cli::kOk);
  EXPECT_EQ(slurp(dir / "a" / "results.csv"), slurp(dir / "b" / "results.csv"));
  EXPECT_EQ(slurp(dir / "a" / "metadata.json"), slurp(dir / "b" / "metadata.json"));
  ASSERT_EQ(run("estimate", cfg, dir / "c", 8), cli::kOk);
  EXPECT_NE(slurp(dir / "a" / "results.csv"), slurp(dir / "c" / "results.csv"));
}

TEST(Cli, RatioScaleWithNegativeThetaFails) {
  const fs::path dir = scratch("ratio");
  Dataset d = simulate(400, 5);
  for (double& y : d.y) y -= 1000.0;
  const fs::path csv = write_data(dir / "data.csv", d);
  json c = estimate_config(csv);
  c["methods"] = {"mr"};
  c["scales"] = {"difference", "ratio"};
  const fs::path cfg = write_json(dir / "cfg.json", c);
  EXPECT_EQ(run("estimate", cfg, dir / "out"), cli::kEstimationExit);
  const json diag = json::parse(slurp(dir / "out" / "diagnostics.json"));
  EXPECT_EQ(diag.at("error_kind"), "DivisionByZero");
}

TEST(Cli, SimulateFlagsLowReplicateCounts) {
  const fs::path dir = scratch("simulate");
  const json c = {{"command", "simulate"}, {"scenario", "II"}, {"n", 300}, {"reps", 10}, {"seed", 2}, {"inference", "none"},
                  {"truth_draws", 1000000}, {"methods", {"mr", "a"}}};
  const fs::path cfg = write_json(dir / "cfg.json", c);
  ASSERT_EQ(run("simulate", cfg, dir / "out"), cli::kOk);
  const auto rows = read_rows(dir / "out" / "summary.csv");
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) EXPECT_EQ(r.at("low_replicate"), "1");
  EXPECT_EQ(read_rows(dir / "out" / "replicates.csv").size(), 20u);
  const json meta = json::parse(slurp(dir / "out" / "metadata.json"));
  EXPECT_TRUE(meta.at("low_replicate").get<bool>());
  EXPECT_EQ(meta.at("truth").at("draws"), 1000000);
}

TEST(Cli, InvalidScenarioAndUnknownKeysAreConfigErrors) {
  const fs::path dir = scratch("config");
  const fs::path bad = write_json(dir / "bad.json", {{"command", "simulate"}, {"scenario", "VII"}});
  EXPECT_EQ(run("simulate", bad), cli::kConfigExit);
  EXPECT_EQ(run_binary("simulate -c " + bad.string() + " -o " + (dir / "o").string()), cli::kConfigExit);
  const fs::path unknown = write_json(dir / "unknown.json", {{"command", "generate"}, {"n", 10}, {"colour", "red"}});
  EXPECT_EQ(run("generate", unknown), cli::kConfigExit);
  EXPECT_EQ(run("estimate", dir / "missing.json"), cli::kConfigExit);
  EXPECT_EQ(run_binary("estimate"), cli::kConfigExit);
  EXPECT_EQ(run_binary("frobnicate -c x.json"), cli::kConfigExit);
}

TEST(Cli, GenerateWritesLoadableData) {
  const fs::path dir = scratch("generate");
  const fs::path cfg = write_json(dir / "cfg.json", {{"command", "generate"}, {"n", 250}, {"seed", 9}});
  ASSERT_EQ(run_binary("generate -c " + cfg.string() + " -o " + (dir / "sim.csv").string()), cli::kOk);
  ColumnMap cols;
  cols.x = {"x1", "x2", "x3", "x4", "xt1", "xt2", "xt3", "xt4"};
  const Dataset d = validate_dataset(read_csv((dir / "sim.csv").string()), cols, Mediator::binary(), Monotonicity::Standard);
  const Dataset ref = simulate(250, 9);
  EXPECT_EQ(d.n, 250u);
  for (std::size_t i = 0; i < d.n; ++i) EXPECT_NEAR(d.y[i], ref.y[i], 1e-12 * std::abs(ref.y[i]));
}

TEST(Cli, IdentitySensitivityGridEqualsBaseEstimate) {
  const fs::path dir = scratch("sensitivity");
  const fs::path csv = write_data(dir / "data.csv", simulate(800, 6));
  json e = estimate_config(csv);
  e["methods"] = {"mr"};
  e["inference"] = "none";
  ASSERT_EQ(run("estimate", write_json(dir / "est.json", e), dir / "est"), cli::kOk);
  const json s = {{"command", "sensitivity"}, {"data", data_block(csv)}, {"inference", "none"},
                  {"grid", {{"type", "xi"}, {"lambda_m0", {1.0, 1.02}}}}, {"effect", {{"kind", "PNDE"}, {"stratum", "10"}}}};
  ASSERT_EQ(run("sensitivity", write_json(dir / "sens.json", s), dir / "sens"), cli::kOk);
  double base = kNaN;
  for (const auto& r : read_rows(dir / "est" / "results.csv"))
    if (r.at("estimand") == "PNDE_10") base = std::stod(r.at("point"));
  const auto grid = read_rows(dir / "sens" / "grid.csv");
  ASSERT_EQ(grid.size(), 2u);
  EXPECT_NEAR(std::stod(grid[0].at("point")), base, 1e-9);
  EXPECT_EQ(grid[1].at("status"), "ok");
  EXPECT_NE(grid[1].at("point"), grid[0].at("point"));
}

TEST(Cli, SensitivityWithNoSurvivingPointExitsFour) {
  const fs::path dir = scratch("sensitivity_fail");
  const fs::path csv = write_data(dir / "data.csv", simulate(400, 6));
  const json s = {{"command", "sensitivity"}, {"data", data_block(csv)}, {"inference", "none"},
                  {"grid", {{"type", "xi"}, {"lambda_m0", {50.0}}}}};
  EXPECT_EQ(run("sensitivity", write_json(dir / "sens.json", s), dir / "out"), cli::kEstimationExit);
  EXPECT_TRUE(fs::exists(dir / "out" / "diagnostics.json"));
}

TEST(Cli, OracleCertifiesShippedFixture) {
  const fs::path dir = scratch("oracle");
  const fs::path cfg = write_json(dir / "cfg.json", {{"command", "oracle"}, {"fixture", test::source_path("data/fixtures/reference_dgp.json")}});
  EXPECT_EQ(run("oracle", cfg, dir / "out"), cli::kOk);
  for (const auto& r : read_rows(dir / "out" / "certification.csv")) EXPECT_EQ(r.at("status"), "pass") << r.at("check");
}

TEST(Cli, OracleRejectsCorruptFixtureAndTamperedGolden) {
  const fs::path dir = scratch("oracle_bad");
  json fx = json::parse(slurp(test::source_path("data/fixtures/reference_dgp.json")));
  json corrupt = fx;
  corrupt["points"][0]["r"]["00"] = {0.7, 0.7};
  write_json(dir / "corrupt.json", corrupt);
  EXPECT_EQ(run("oracle", write_json(dir / "c1.json", {{"command", "oracle"}, {"fixture", "corrupt.json"}}), dir / "o1"), cli::kDataExit);
  json tampered = fx;
  tampered["golden"][0]["value"] = tampered["golden"][0]["value"].get<double>() + 1e-6;
  write_json(dir / "tampered.json", tampered);
  EXPECT_EQ(run("oracle", write_json(dir / "c2.json", {{"command", "oracle"}, {"fixture", "tampered.json"}}), dir / "o2"), cli::kCheckFailed);
  json extra = fx;
  extra["note"] = "hi";
  write_json(dir / "extra.json", extra);
  EXPECT_EQ(run("oracle", write_json(dir / "c3.json", {{"command", "oracle"}, {"fixture", "extra.json"}}), dir / "o3"), cli::kDataExit);
}
