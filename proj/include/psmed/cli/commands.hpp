#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmed/cli/config.hpp"
#include "psmed/csv.hpp"
#include "psmed/glm.hpp"
#include "psmed/oracle_fixture.hpp"

namespace psmed::cli {

inline constexpr const char* kResultSchema = "psmed.results/1";

enum ExitCode { kOk = 0, kCheckFailed = 1, kConfigExit = 2, kDataExit = 3, kEstimationExit = 4 };

inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError: return kConfigExit;
    case ErrorKind::MissingColumn:
    case ErrorKind::NonBinaryTreatment:
    case ErrorKind::InvalidValue:
    case ErrorKind::StrongMonotonicityViolated:
    case ErrorKind::EmptyCell:
    case ErrorKind::IoError:
    case ErrorKind::InvalidDgp: return kDataExit;
    default: return kEstimationExit;
  }
}

inline std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::IoError, "cannot create output directory " + dir);
  return dir;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + p.string());
  out << text;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// NaN is not representable in JSON; missing values become null.
inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json knobs_json(const ClipPolicy& clip) {
  const IrlsOptions irls{};
  return {{"clip_floor", clip.floor},
          {"clip_strict", clip.strict},
          {"max_density_ratio", clip.max_density_ratio},
          {"quadrature_nodes", clip.quadrature_nodes},
          {"irls_tolerance", irls.tolerance},
          {"irls_max_iterations", irls.max_iterations},
          {"irls_step_halvings", irls.max_halvings},
          {"irls_ridge", irls.ridge}};
}

inline json fits_json(const std::vector<FitRecord>& fits) {
  json a = json::array();
  for (const auto& f : fits)
    a.push_back({{"nuisance", f.nuisance}, {"learner", f.learner}, {"converged", f.converged}, {"separation", f.separation}, {"iterations", f.iterations}});
  return a;
}

inline json clip_json(const ClipCounts& c) { return {{"pi", c.pi}, {"p", c.p}, {"r", c.r}, {"score", c.score}}; }

inline std::string results_csv(const std::vector<EstimateResult>& rows) {
  std::string s = "estimand,scale,method,point,se,ci_low,ci_high,inference,resamples,seed,status\n";
  for (const auto& r : rows)
    s += r.estimand + ',' + r.scale + ',' + to_string(r.method) + ',' + format_double(r.point) + ',' + format_double(r.se) + ',' +
         format_double(r.ci_low) + ',' + format_double(r.ci_high) + ',' + to_string(r.inference) + ',' + std::to_string(r.resamples) +
         ',' + std::to_string(r.seed) + ',' + r.status + '\n';
  return s;
}

inline Dataset load_data(const DataConfig& c) { return validate_dataset(read_csv(c.path), c.columns, c.mediator, c.monotonicity); }

inline json data_json(const Dataset& d) {
  return {{"n", d.n},
          {"covariates", d.covariate_names},
          {"mediator", d.mediator.kind == Mediator::Kind::ContinuousGaussian ? "continuous" : (d.mediator.kind == Mediator::Kind::Binary ? "binary" : "categorical")},
          {"m_max", d.mediator.m_max},
          {"monotonicity", d.monotonicity == Monotonicity::Strong ? "strong" : "standard"},
          {"cells", {{"z0d0", d.cells(0, 0)}, {"z0d1", d.cells(0, 1)}, {"z1d0", d.cells(1, 0)}, {"z1d1", d.cells(1, 1)}}}};
}

inline int cmd_estimate(const json& raw, const std::string& out_override, std::optional<std::uint64_t> seed_override) {
  EstimateConfig c = parse_estimate(raw);
  if (!out_override.empty()) c.out_dir = out_override;
  if (seed_override) c.analysis.seed = *seed_override;
  const auto dir = prepare_dir(c.out_dir);
  const Dataset data = load_data(c.data);
  c.analysis.spec = resolve_models(c.models, c.data.columns);
  const AnalysisOutput out = run_analysis(data, c.analysis);
  write_text(dir / "results.csv", results_csv(out.results));
  json meta = {{"schema", kResultSchema},
               {"command", "estimate"},
               {"config", raw},
               {"seed", c.analysis.seed},
               {"B", c.analysis.B},
               {"V", c.analysis.V},
               {"level", c.analysis.level},
               {"knobs", knobs_json(c.analysis.clip)},
               {"data", data_json(data)},
               {"clip_counts", clip_json(out.diagnostics.clip_counts)},
               {"fits", fits_json(out.diagnostics.fits)},
               {"failed_replicates", out.diagnostics.failed_replicates}};
  if (!out.diagnostics.folds.empty()) {
    json folds = json::array();
    for (const auto& f : out.diagnostics.folds) folds.push_back({{"fold", f.fold}, {"all_converged", f.all_converged()}, {"fits", fits_json(f.fits)}});
    meta["folds"] = folds;
    meta["fold_plan_hash"] = std::to_string(out.diagnostics.fold_plan_hash);
  }
  write_text(dir / "metadata.json", dump(meta));
  return kOk;
}

inline int cmd_generate(const json& raw, const std::string& out_override, std::optional<std::uint64_t> seed_override) {
  GenerateConfig c = parse_generate(raw);
  if (!out_override.empty()) c.path = out_override;
  if (seed_override) c.seed = *seed_override;
  const SimulatedSample s = simulate_with_potentials(c.n, c.seed, c.null_effects ? DgpParams::null_effects() : DgpParams{});
  const auto parent = std::filesystem::path(c.path).parent_path();
  if (!parent.empty()) prepare_dir(parent.string());
  std::ofstream out(c.path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + c.path);
  write_dataset_csv(s.data, out);
  if (s.nonfinite_transforms) std::cerr << "note: " << s.nonfinite_transforms << " non-finite transformed covariate values\n";
  return kOk;
}

inline int cmd_simulate(const json& raw, const std::string& out_override, std::optional<std::uint64_t> seed_override) {
  SimulateConfig c = parse_simulate(raw);
  if (!out_override.empty()) c.out_dir = out_override;
  if (seed_override) c.seed = *seed_override;
  const auto dir = prepare_dir(c.out_dir);
  const DgpParams par = c.null_effects ? DgpParams::null_effects() : DgpParams{};
  const TruthHandle truth = compute_truth(c.truth_seed, c.truth_draws, par);
  const StudyResult res = run_scenario_study(c.scenario, c.n, c.reps, c.seed, truth, c.study, par);
  std::ostringstream rows, summary;
  write_study_rows(res, rows);
  write_study_summary(res, summary);
  write_text(dir / "replicates.csv", rows.str());
  write_text(dir / "summary.csv", summary.str());
  json th = json::object();
  for (Stratum s : strata_for_mode(Monotonicity::Standard))
    for (const auto& pr : kEffectPairs) {
      const TargetIndex t{pr[0], pr[1], s};
      th[t.label()] = {{"value", truth.get(t)}, {"se", truth.se_of(t)}};
    }
  json meta = {{"schema", kResultSchema},
               {"command", "simulate"},
               {"config", raw},
               {"scenario", to_string(c.scenario)},
               {"seed", c.seed},
               {"n", c.n},
               {"reps", c.reps},
               {"B", c.study.B},
               {"V", c.study.V},
               {"target", c.study.target.label()},
               {"knobs", knobs_json(c.study.clip)},
               {"low_replicate", c.reps < 100},
               {"truth", {{"seed", truth.seed}, {"draws", truth.draws}, {"theta", th}}}};
  write_text(dir / "metadata.json", dump(meta));
  return kOk;
}

inline int cmd_sensitivity(const json& raw, const std::string& out_override, std::optional<std::uint64_t> seed_override) {
  SensitivityConfig c = parse_sensitivity(raw);
  if (!out_override.empty()) c.out_dir = out_override;
  if (seed_override) c.options.seed = *seed_override;
  const auto dir = prepare_dir(c.out_dir);
  const Dataset data = load_data(c.data);
  const ModelSpec spec = resolve_models(c.models, c.data.columns);
  const std::vector<GridRow> rows = sensitivity_grid(data, spec, c.grid, c.effect, c.options);
  std::string grid = "parameters,estimand,scale,point,se,ci_low,ci_high,inference,resamples,seed,status,tipping,message\n";
  std::string tipping = "parameters,estimand,point,ci_low,ci_high\n";
  std::size_t ok = 0;
  for (const auto& r : rows) {
    const EstimateResult& e = r.result;
    if (e.status == "ok") ++ok;
    std::string msg = r.message;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    grid += r.parameters + ',' + e.estimand + ',' + e.scale + ',' + format_double(e.point) + ',' + format_double(e.se) + ',' +
            format_double(e.ci_low) + ',' + format_double(e.ci_high) + ',' + to_string(e.inference) + ',' + std::to_string(e.resamples) +
            ',' + std::to_string(e.seed) + ',' + e.status + ',' + (r.tipping ? "1" : "0") + ',' + msg + '\n';
    if (r.tipping)
      tipping += r.parameters + ',' + e.estimand + ',' + format_double(e.point) + ',' + format_double(e.ci_low) + ',' + format_double(e.ci_high) + '\n';
  }
  write_text(dir / "grid.csv", grid);
  write_text(dir / "tipping.csv", tipping);
  json meta = {{"schema", kResultSchema},
               {"command", "sensitivity"},
               {"config", raw},
               {"seed", c.options.seed},
               {"B", c.options.B},
               {"level", c.options.level},
               {"knobs", knobs_json(c.options.clip)},
               {"data", data_json(data)},
               {"grid_points", rows.size()},
               {"succeeded", ok}};
  write_text(dir / "metadata.json", dump(meta));
  if (ok == 0) {
    write_text(dir / "diagnostics.json", dump({{"error", "no grid point succeeded"}, {"first_message", rows.front().message}}));
    return kEstimationExit;
  }
  return kOk;
}

inline int cmd_oracle(const json& raw, const std::string& out_override, std::optional<std::uint64_t>) {
  OracleConfig c = parse_oracle(raw);
  if (!out_override.empty()) c.out_dir = out_override;
  const auto dir = prepare_dir(c.out_dir);
  const OracleFixture fx = load_fixture(c.fixture);
  const auto checks = certify(fx.dgp, fx.golden);
  std::string report = "check,discrepancy,tolerance,status\n";
  bool all = true;
  for (const auto& ck : checks) {
    report += ck.name + ',' + format_double(ck.discrepancy) + ',' + format_double(ck.tolerance) + ',' + (ck.pass() ? "pass" : "FAIL") + '\n';
    all = all && ck.pass();
  }
  write_text(dir / "certification.csv", report);
  std::cout << report;
  return all ? kOk : kCheckFailed;
}

inline void write_diagnostics(const std::string& dir, const std::string& command, const Error& e) {
  try {
    const auto d = prepare_dir(dir);
    write_text(d / "diagnostics.json", dump({{"command", command}, {"error_kind", std::string(to_string(e.kind()))}, {"message", e.what()}}));
  } catch (const Error&) {
  }
}

// Input paths in a config are relative to the config file; output paths are relative to the working directory.
inline json rebase_inputs(json raw, const std::string& config_path) {
  const auto base = std::filesystem::path(config_path).parent_path();
  auto rebase = [&](json& slot) {
    if (!slot.is_string()) return;
    const std::filesystem::path p = slot.get<std::string>();
    if (p.is_relative() && !base.empty()) slot = (base / p).lexically_normal().string();
  };
  if (raw.contains("data") && raw["data"].is_object() && raw["data"].contains("path")) rebase(raw["data"]["path"]);
  if (raw.contains("fixture")) rebase(raw["fixture"]);
  return raw;
}

// Entry point shared by the binary and the tests.
inline int run_command(const std::string& command, const std::string& config_path, const std::string& out_override,
                       std::optional<std::uint64_t> seed_override, std::ostream& err = std::cerr) {
  std::string diag_dir = out_override;
  try {
    const json raw = rebase_inputs(load_config(config_path), config_path);
    if (raw.contains("command") && raw.at("command") != command) config_error("config is for command '" + raw.at("command").get<std::string>() + "'");
    if (diag_dir.empty() && raw.contains("output") && raw.at("output").is_object() && raw.at("output").contains("dir"))
      diag_dir = raw.at("output").at("dir").get<std::string>();
    if (diag_dir.empty()) diag_dir = "out";
    if (command == "estimate") return cmd_estimate(raw, out_override, seed_override);
    if (command == "simulate") return cmd_simulate(raw, out_override, seed_override);
    if (command == "generate") return cmd_generate(raw, out_override, seed_override);
    if (command == "sensitivity") return cmd_sensitivity(raw, out_override, seed_override);
    if (command == "oracle") return cmd_oracle(raw, out_override, seed_override);
    config_error("unknown command '" + command + "'");
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    const int code = exit_code_for(e.kind());
    if (code == kEstimationExit) write_diagnostics(diag_dir.empty() ? "out" : diag_dir, command, e);
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    write_diagnostics(diag_dir.empty() ? "out" : diag_dir, command, Error(ErrorKind::InvalidValue, e.what()));
    return kEstimationExit;
  }
}

}  // namespace psmed::cli
