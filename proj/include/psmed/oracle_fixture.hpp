#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "psmed/oracle.hpp"

namespace psmed {

struct OracleFixture {
  DiscreteDgp dgp;
  std::vector<GoldenValue> golden;
};

namespace fixture_detail {

inline void only_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::InvalidDgp, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) fail(ErrorKind::InvalidDgp, "unknown key '" + k + "' in " + where);
}

inline std::array<std::vector<double>, 4> cell_table(const nlohmann::json& j, const std::string& where) {
  only_keys(j, {"00", "01", "10", "11"}, where);
  std::array<std::vector<double>, 4> out;
  for (int z = 0; z < 2; ++z)
    for (int d = 0; d < 2; ++d) {
      const std::string key = std::to_string(z) + std::to_string(d);
      if (!j.contains(key)) fail(ErrorKind::InvalidDgp, where + " lacks cell " + key);
      out[static_cast<std::size_t>(cell_index(z, d))] = j.at(key).get<std::vector<double>>();
    }
  return out;
}

}  // namespace fixture_detail

inline OracleFixture parse_fixture(const nlohmann::json& j) {
  using fixture_detail::only_keys;
  OracleFixture fx;
  try {
    only_keys(j, {"schema", "monotonicity", "m_max", "points", "golden"}, "fixture");
    if (j.value("schema", std::string()) != "psmed.discrete_dgp/1") fail(ErrorKind::InvalidDgp, "unsupported fixture schema");
    const std::string mode = j.at("monotonicity").get<std::string>();
    if (mode != "standard" && mode != "strong") fail(ErrorKind::InvalidDgp, "monotonicity must be standard or strong");
    fx.dgp.mode = mode == "strong" ? Monotonicity::Strong : Monotonicity::Standard;
    fx.dgp.m_max = j.at("m_max").get<int>();
    for (const auto& pt : j.at("points")) {
      only_keys(pt, {"prob", "features", "pi1", "p1", "r", "mu"}, "point");
      fx.dgp.x_prob.push_back(pt.at("prob").get<double>());
      if (pt.contains("features")) fx.dgp.x_features.push_back(pt.at("features").get<std::vector<double>>());
      fx.dgp.pi1.push_back(pt.at("pi1").get<double>());
      const auto p1 = pt.at("p1").get<std::vector<double>>();
      if (p1.size() != 2) fail(ErrorKind::InvalidDgp, "p1 needs two entries");
      fx.dgp.p1.push_back({p1[0], p1[1]});
      fx.dgp.r.push_back(fixture_detail::cell_table(pt.at("r"), "r"));
      fx.dgp.mu.push_back(fixture_detail::cell_table(pt.at("mu"), "mu"));
    }
    if (!fx.dgp.x_features.empty() && fx.dgp.x_features.size() != fx.dgp.x_prob.size())
      fail(ErrorKind::InvalidDgp, "features must be given for every point or none");
    if (j.contains("golden"))
      for (const auto& g : j.at("golden")) {
        only_keys(g, {"stratum", "z", "z_prime", "value", "exact"}, "golden entry");
        GoldenValue gv;
        gv.target = {g.at("z").get<int>(), g.at("z_prime").get<int>(), parse_stratum(g.at("stratum").get<std::string>())};
        gv.value = g.at("value").get<double>();
        fx.golden.push_back(gv);
      }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidDgp, std::string("malformed fixture: ") + e.what());
  }
  validate(fx.dgp);
  return fx;
}

inline OracleFixture load_fixture(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open fixture " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidDgp, std::string("fixture is not valid JSON: ") + e.what());
  }
  return parse_fixture(j);
}

}  // namespace psmed
