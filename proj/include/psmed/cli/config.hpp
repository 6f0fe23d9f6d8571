#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmed/analysis.hpp"
#include "psmed/sensitivity.hpp"
#include "psmed/simulation.hpp"

namespace psmed::cli {

using nlohmann::json;

[[noreturn]] inline void config_error(const std::string& msg) { fail(ErrorKind::ConfigError, msg); }

inline void only_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) config_error("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("key '" + key + "' has the wrong type");
  }
}

template <class T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) config_error("missing key '" + key + "' in " + where);
  return get_or<T>(j, key, T{});
}

struct DataConfig {
  std::string path;
  ColumnMap columns;
  Mediator mediator = Mediator::binary();
  Monotonicity monotonicity = Monotonicity::Standard;
};

struct ModelNames {
  std::optional<std::vector<std::string>> pi, p, r, mu;
  OutcomeKind outcome = OutcomeKind::Auto;
};

struct EstimateConfig {
  DataConfig data;
  ModelNames models;
  AnalysisConfig analysis;
  std::string out_dir = "out";
};

struct SimulateConfig {
  ScenarioId scenario = ScenarioId::I;
  std::size_t n = 1000;
  int reps = 500;
  std::uint64_t seed = 1;
  std::uint64_t truth_seed = 20240101;
  std::size_t truth_draws = 10000000;
  bool null_effects = false;
  StudyOptions study;
  std::string out_dir = "out";
};

struct GenerateConfig {
  std::size_t n = 1000;
  std::uint64_t seed = 1;
  bool null_effects = false;
  std::string path = "simulated.csv";
};

struct SensitivityConfig {
  DataConfig data;
  ModelNames models;
  std::vector<SensitivityPoint> grid;
  EffectSelector effect;
  GridOptions options;
  std::string out_dir = "out";
};

struct OracleConfig {
  std::string fixture;
  std::string out_dir = "out";
};

inline Mediator parse_mediator(const json& j) {
  only_keys(j, {"kind", "m_max"}, "mediator");
  const std::string kind = get_or<std::string>(j, "kind", "binary");
  if (kind == "binary") return Mediator::binary();
  if (kind == "categorical") {
    const int m = require<int>(j, "m_max", "mediator");
    if (m < 1) config_error("mediator.m_max must be at least 1");
    return Mediator::categorical(m);
  }
  if (kind == "continuous") return Mediator::continuous();
  config_error("mediator.kind must be binary, categorical or continuous");
}

inline Monotonicity parse_monotonicity(const std::string& s) {
  if (s == "standard") return Monotonicity::Standard;
  if (s == "strong") return Monotonicity::Strong;
  config_error("monotonicity must be standard or strong");
}

inline DataConfig parse_data(const json& root) {
  DataConfig d;
  const json& j = root.at("data");
  only_keys(j, {"path", "columns"}, "data");
  d.path = require<std::string>(j, "path", "data");
  if (j.contains("columns")) {
    const json& c = j.at("columns");
    only_keys(c, {"z", "d", "m", "y", "x"}, "data.columns");
    d.columns.z = get_or<std::string>(c, "z", "z");
    d.columns.d = get_or<std::string>(c, "d", "d");
    d.columns.m = get_or<std::string>(c, "m", "m");
    d.columns.y = get_or<std::string>(c, "y", "y");
    d.columns.x = get_or<std::vector<std::string>>(c, "x", {});
  }
  if (d.columns.x.empty()) config_error("data.columns.x must list the covariate columns");
  if (root.contains("mediator")) d.mediator = parse_mediator(root.at("mediator"));
  d.monotonicity = parse_monotonicity(get_or<std::string>(root, "monotonicity", "standard"));
  return d;
}

inline ModelNames parse_models(const json& root) {
  ModelNames m;
  if (!root.contains("models")) return m;
  const json& j = root.at("models");
  only_keys(j, {"pi", "p", "r", "mu", "outcome"}, "models");
  if (j.contains("pi")) m.pi = get_or<std::vector<std::string>>(j, "pi", {});
  if (j.contains("p")) m.p = get_or<std::vector<std::string>>(j, "p", {});
  if (j.contains("r")) m.r = get_or<std::vector<std::string>>(j, "r", {});
  if (j.contains("mu")) m.mu = get_or<std::vector<std::string>>(j, "mu", {});
  const std::string o = get_or<std::string>(j, "outcome", "auto");
  if (o == "auto") m.outcome = OutcomeKind::Auto;
  else if (o == "continuous") m.outcome = OutcomeKind::Continuous;
  else if (o == "binary") m.outcome = OutcomeKind::Binary;
  else config_error("models.outcome must be auto, continuous or binary");
  return m;
}

// Resolves covariate names against the mapped covariate list; unmapped names are config errors.
inline ModelSpec resolve_models(const ModelNames& names, const ColumnMap& cols) {
  auto resolve = [&](const std::optional<std::vector<std::string>>& list, const char* what) {
    FeatureSpec f;
    if (!list) {
      for (std::size_t j = 0; j < cols.x.size(); ++j) f.columns.push_back(j);
      return f;
    }
    for (const auto& name : *list) {
      std::size_t j = 0;
      while (j < cols.x.size() && cols.x[j] != name) ++j;
      if (j == cols.x.size()) config_error(std::string("models.") + what + " names '" + name + "', which is not in data.columns.x");
      f.columns.push_back(j);
    }
    return f;
  };
  return {resolve(names.pi, "pi"), resolve(names.p, "p"), resolve(names.r, "r"), resolve(names.mu, "mu"), names.outcome};
}

inline LearnerSpec parse_learners(const json& j) {
  only_keys(j, {"candidates", "cv_folds", "trees", "shrinkage", "k"}, "learners");
  LearnerSpec spec;
  spec.candidates.clear();
  const int trees = get_or<int>(j, "trees", 200);
  const double shrink = get_or<double>(j, "shrinkage", 0.1);
  const int k = get_or<int>(j, "k", 10);
  for (const auto& c : get_or<std::vector<std::string>>(j, "candidates", {"glm", "stumps"})) {
    if (c == "glm") spec.candidates.push_back(CandidateSpec::glm());
    else if (c == "stumps") spec.candidates.push_back(CandidateSpec::stumps(trees, shrink));
    else if (c == "knn") spec.candidates.push_back(CandidateSpec::knn(k));
    else config_error("unknown learner '" + c + "'");
  }
  if (spec.candidates.empty()) config_error("learners.candidates is empty");
  spec.cv_folds = get_or<int>(j, "cv_folds", 5);
  if (spec.cv_folds < 2) config_error("learners.cv_folds must be at least 2");
  return spec;
}

inline ClipPolicy parse_clip(const json& j) {
  only_keys(j, {"floor", "strict", "max_density_ratio", "quadrature_nodes"}, "clip");
  ClipPolicy c;
  c.floor = get_or<double>(j, "floor", c.floor);
  c.strict = get_or<bool>(j, "strict", c.strict);
  c.max_density_ratio = get_or<double>(j, "max_density_ratio", c.max_density_ratio);
  c.quadrature_nodes = get_or<int>(j, "quadrature_nodes", c.quadrature_nodes);
  if (!(c.floor > 0.0 && c.floor < 0.5)) config_error("clip.floor must lie in (0, 0.5)");
  if (c.quadrature_nodes < 2 || c.quadrature_nodes > 200) config_error("clip.quadrature_nodes must lie in [2, 200]");
  return c;
}

inline Inference parse_inference(const std::string& s) {
  if (s == "bootstrap_percentile") return Inference::BootstrapPercentile;
  if (s == "bootstrap_wald") return Inference::BootstrapWald;
  if (s == "none") return Inference::None;
  config_error("inference must be bootstrap_percentile, bootstrap_wald or none");
}

inline std::vector<Method> parse_methods(const json& j, const char* key, std::vector<Method> fallback) {
  if (!j.contains(key)) return fallback;
  std::vector<Method> out;
  for (const auto& s : get_or<std::vector<std::string>>(j, key, {})) {
    try {
      out.push_back(parse_method(s));
    } catch (const Error&) {
      config_error("unknown method '" + s + "'");
    }
  }
  if (out.empty()) config_error(std::string(key) + " is empty");
  return out;
}

inline std::vector<Scale> parse_scales(const json& j) {
  std::vector<Scale> out;
  for (const auto& s : get_or<std::vector<std::string>>(j, "scales", {"difference"})) {
    if (s == "difference") out.push_back(Scale::Difference);
    else if (s == "ratio") out.push_back(Scale::RiskRatio);
    else config_error("scales entries must be difference or ratio");
  }
  if (out.empty()) config_error("scales is empty");
  return out;
}

inline double parse_level(const json& j) {
  const double level = get_or<double>(j, "level", 0.95);
  if (!(level > 0.5 && level < 1.0)) config_error("level must lie in (0.5, 1)");
  return level;
}

inline std::string out_dir(const json& j) {
  if (!j.contains("output")) return "out";
  only_keys(j.at("output"), {"dir"}, "output");
  return get_or<std::string>(j.at("output"), "dir", "out");
}

inline EstimateConfig parse_estimate(const json& j) {
  only_keys(j, {"command", "data", "mediator", "monotonicity", "methods", "scales", "models", "inference", "B", "V", "seed",
                "level", "threads", "clip", "learners", "output"},
            "config");
  EstimateConfig c;
  if (!j.contains("data")) config_error("missing key 'data'");
  c.data = parse_data(j);
  c.models = parse_models(j);
  AnalysisConfig& a = c.analysis;
  a.methods = parse_methods(j, "methods", {Method::MR});
  a.scales = parse_scales(j);
  a.inference = parse_inference(get_or<std::string>(j, "inference", "bootstrap_percentile"));
  a.B = get_or<int>(j, "B", 1000);
  a.V = get_or<int>(j, "V", 5);
  a.seed = get_or<std::uint64_t>(j, "seed", 1);
  a.level = parse_level(j);
  a.threads = get_or<unsigned>(j, "threads", 1);
  if (j.contains("clip")) a.clip = parse_clip(j.at("clip"));
  if (j.contains("learners")) a.learners = parse_learners(j.at("learners"));
  if (a.inference != Inference::None && a.B < 50) config_error("B must be at least 50");
  c.out_dir = out_dir(j);
  return c;
}

inline TargetIndex parse_target(const json& j) {
  only_keys(j, {"stratum", "z", "z_prime"}, "target");
  TargetIndex t;
  try {
    t.stratum = parse_stratum(get_or<std::string>(j, "stratum", "10"));
  } catch (const Error&) {
    config_error("target.stratum must be 10, 11 or 00");
  }
  t.z = get_or<int>(j, "z", 1);
  t.z_prime = get_or<int>(j, "z_prime", 0);
  if ((t.z != 0 && t.z != 1) || (t.z_prime != 0 && t.z_prime != 1) || (t.z == 0 && t.z_prime == 1))
    config_error("target pair must be (1,1), (1,0) or (0,0)");
  return t;
}

inline SimulateConfig parse_simulate(const json& j) {
  only_keys(j, {"command", "scenario", "n", "reps", "seed", "methods", "B", "V", "inference", "level", "threads", "truth_draws",
                "truth_seed", "target", "null_effects", "learners", "clip", "output"},
            "config");
  SimulateConfig c;
  try {
    c.scenario = parse_scenario(get_or<std::string>(j, "scenario", "I"));
  } catch (const Error& e) {
    config_error(e.what());
  }
  const long long n = get_or<long long>(j, "n", 1000);
  if (n < 10) config_error("n must be at least 10");
  c.n = static_cast<std::size_t>(n);
  c.reps = get_or<int>(j, "reps", 500);
  if (c.reps < 1) config_error("reps must be positive");
  c.seed = get_or<std::uint64_t>(j, "seed", 1);
  c.truth_seed = get_or<std::uint64_t>(j, "truth_seed", c.truth_seed);
  c.truth_draws = get_or<std::size_t>(j, "truth_draws", c.truth_draws);
  if (c.truth_draws < 1000000) config_error("truth_draws must be at least 10^6");
  c.null_effects = get_or<bool>(j, "null_effects", false);
  c.study.methods = parse_methods(j, "methods", {Method::MR});
  c.study.B = get_or<int>(j, "B", 200);
  c.study.V = get_or<int>(j, "V", 5);
  c.study.inference = parse_inference(get_or<std::string>(j, "inference", "bootstrap_wald"));
  c.study.level = parse_level(j);
  c.study.threads = get_or<unsigned>(j, "threads", 1);
  if (j.contains("target")) c.study.target = parse_target(j.at("target"));
  if (j.contains("learners")) c.study.learners = parse_learners(j.at("learners"));
  if (j.contains("clip")) c.study.clip = parse_clip(j.at("clip"));
  if (c.study.inference != Inference::None && c.study.B < 50) config_error("B must be at least 50");
  c.out_dir = out_dir(j);
  return c;
}

inline GenerateConfig parse_generate(const json& j) {
  only_keys(j, {"command", "n", "seed", "null_effects", "output"}, "config");
  GenerateConfig c;
  const long long n = get_or<long long>(j, "n", 1000);
  if (n < 1) config_error("n must be positive");
  c.n = static_cast<std::size_t>(n);
  c.seed = get_or<std::uint64_t>(j, "seed", 1);
  c.null_effects = get_or<bool>(j, "null_effects", false);
  if (j.contains("output")) {
    only_keys(j.at("output"), {"path"}, "output");
    c.path = get_or<std::string>(j.at("output"), "path", c.path);
  }
  return c;
}

inline std::vector<double> number_list(const json& j, const char* key, std::vector<double> fallback) {
  auto v = get_or<std::vector<double>>(j, key, fallback);
  if (v.empty()) config_error(std::string("grid.") + key + " is empty");
  for (double x : v)
    if (!(x > 0.0)) config_error(std::string("grid.") + key + " entries must be positive");
  return v;
}

inline SensitivityConfig parse_sensitivity(const json& j) {
  only_keys(j, {"command", "data", "mediator", "monotonicity", "models", "grid", "effect", "inference", "B", "seed", "level", "threads",
                "clip", "output"},
            "config");
  SensitivityConfig c;
  if (!j.contains("data")) config_error("missing key 'data'");
  c.data = parse_data(j);
  c.models = parse_models(j);
  if (!j.contains("grid")) config_error("missing key 'grid'");
  const json& g = j.at("grid");
  const std::string type = get_or<std::string>(g, "type", "");
  if (type == "xi") {
    only_keys(g, {"type", "lambda_m1", "lambda_m0", "lambda_y1", "lambda_y0"}, "grid");
    const auto m1 = number_list(g, "lambda_m1", {1.0}), m0 = number_list(g, "lambda_m0", {1.0});
    const auto y1 = number_list(g, "lambda_y1", {1.0}), y0 = number_list(g, "lambda_y0", {1.0});
    for (double a : m1)
      for (double b : m0)
        for (double cc : y1)
          for (double d : y0) c.grid.emplace_back(XiSpec{a, b, cc, d, c.data.monotonicity});
  } else if (type == "t") {
    only_keys(g, {"type", "zeta"}, "grid");
    for (double z : number_list(g, "zeta", {1.0})) c.grid.emplace_back(TSpec{z});
  } else {
    config_error("grid.type must be xi or t");
  }
  if (j.contains("effect")) {
    const json& e = j.at("effect");
    only_keys(e, {"kind", "stratum", "z", "z_prime", "scale"}, "effect");
    const std::string kind = get_or<std::string>(e, "kind", "PNDE");
    if (kind == "PNIE") c.effect.kind = EffectSelector::Kind::PNIE;
    else if (kind == "PNDE") c.effect.kind = EffectSelector::Kind::PNDE;
    else if (kind == "PCE") c.effect.kind = EffectSelector::Kind::PCE;
    else if (kind == "theta") c.effect.kind = EffectSelector::Kind::Theta;
    else config_error("effect.kind must be PNIE, PNDE, PCE or theta");
    try {
      c.effect.stratum = parse_stratum(get_or<std::string>(e, "stratum", "10"));
    } catch (const Error&) {
      config_error("effect.stratum must be 10, 11 or 00");
    }
    if (!admissible(c.effect.stratum, c.data.monotonicity)) config_error("effect.stratum is not admissible under this monotonicity");
    c.effect.pair = {get_or<int>(e, "z", 1), get_or<int>(e, "z_prime", 0)};
    const std::string scale = get_or<std::string>(e, "scale", "difference");
    if (scale == "difference") c.effect.scale = Scale::Difference;
    else if (scale == "ratio") c.effect.scale = Scale::RiskRatio;
    else config_error("effect.scale must be difference or ratio");
  }
  c.options.inference = parse_inference(get_or<std::string>(j, "inference", "bootstrap_percentile"));
  c.options.B = get_or<int>(j, "B", 200);
  c.options.seed = get_or<std::uint64_t>(j, "seed", 1);
  c.options.level = parse_level(j);
  c.options.threads = get_or<unsigned>(j, "threads", 1);
  if (j.contains("clip")) c.options.clip = parse_clip(j.at("clip"));
  if (c.options.inference != Inference::None && c.options.B < 50) config_error("B must be at least 50");
  c.out_dir = out_dir(j);
  return c;
}

inline OracleConfig parse_oracle(const json& j) {
  only_keys(j, {"command", "fixture", "output"}, "config");
  OracleConfig c;
  c.fixture = require<std::string>(j, "fixture", "config");
  c.out_dir = out_dir(j);
  return c;
}

inline json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open config " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) config_error("config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace psmed::cli
