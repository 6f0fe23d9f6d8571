#include "support.hpp"

#include "psmed/oracle.hpp"

using namespace psmed;

namespace {

const DiscreteDgp& fixture() { return test::reference_fixture().dgp; }

DiscreteDgp constant_outcome(double c) {
  DiscreteDgp g = fixture();
  for (auto& pt : g.mu)
    for (auto& cell : pt)
      for (double& v : cell) v = c;
  return g;
}

nlohmann::json fixture_json() {
  std::ifstream in(test::source_path("data/fixtures/reference_dgp.json"));
  nlohmann::json j;
  in >> j;
  return j;
}

}  // namespace

TEST(Oracle, ConstantOutcomeGivesConstantTheta) {
  const DiscreteDgp g = constant_outcome(4.25);
  for (const auto& t : effect_targets(g.mode)) {
    EXPECT_NEAR(oracle_theta(g, t), 4.25, 1e-14) << t.label();
    for (MomentForm f : {MomentForm::A, MomentForm::B, MomentForm::C, MomentForm::D})
      EXPECT_NEAR(oracle_moment_expectation(g, t, f), 4.25, 1e-13);
  }
}

TEST(Oracle, SharedMediatorLawGivesNoIndirectEffect) {
  DiscreteDgp g = fixture();
  // equal pmfs across arms within each stratum's cells
  for (auto& pt : g.r) {
    pt[static_cast<std::size_t>(cell_index(1, 1))] = pt[static_cast<std::size_t>(cell_index(0, 1))];
    pt[static_cast<std::size_t>(cell_index(1, 0))] = pt[static_cast<std::size_t>(cell_index(0, 0))];
  }
  validate(g);
  for (Stratum s : strata_for_mode(g.mode)) {
    const double pnie = oracle_theta(g, {1, 1, s}) - oracle_theta(g, {1, 0, s});
    if (s == Stratum::compliers()) EXPECT_NE(pnie, 0.0);  // compliers switch cells, so their law still moves
    else EXPECT_NEAR(pnie, 0.0, 1e-14) << s.label();
  }
  DiscreteDgp h = fixture();
  for (auto& pt : h.r)
    for (auto& cell : pt) cell = pt[0];
  validate(h);
  for (Stratum s : strata_for_mode(h.mode)) EXPECT_NEAR(oracle_theta(h, {1, 1, s}) - oracle_theta(h, {1, 0, s}), 0.0, 1e-14);
}

TEST(Oracle, StandardOrderingIsEnforced) {
  DiscreteDgp g = fixture();
  g.p1[0] = {0.8, 0.3};  // P(D=1|Z=0) above P(D=1|Z=1)
  EXPECT_PSMED_ERROR(validate(g), ErrorKind::InvalidDgp);
  DiscreteDgp h = fixture();
  h.x_prob[0] += 0.1;
  EXPECT_PSMED_ERROR(validate(h), ErrorKind::InvalidDgp);
  DiscreteDgp k = fixture();
  k.r[0][0][0] = -0.1;
  k.r[0][0][1] = 1.1;
  EXPECT_PSMED_ERROR(validate(k), ErrorKind::InvalidDgp);
}

TEST(Oracle, EifMeanIsZeroAtTruthAndMinusOneAboveIt) {
  const DiscreteDgp& g = fixture();
  for (const auto& t : effect_targets(g.mode)) {
    const double th = oracle_theta(g, t);
    EXPECT_NEAR(oracle_eif_mean(g, t, th), 0.0, 1e-12);
    EXPECT_NEAR(oracle_eif_mean(g, t, th + 1.0), -1.0, 1e-12);
  }
}

TEST(Oracle, MultiplyRobustUnderEachSingleWrongModel) {
  const DiscreteDgp& g = fixture();
  for (Nuisance n : {Nuisance::Pi, Nuisance::P, Nuisance::R, Nuisance::Mu}) {
    const DiscreteDgp w = perturb(g, n);
    for (const auto& t : effect_targets(g.mode)) EXPECT_NEAR(oracle_theta_mr(g, w, t), oracle_theta(g, t), 1e-12) << to_string(n);
  }
  const TargetIndex t{1, 0, Stratum::compliers()};
  EXPECT_GT(std::abs(oracle_theta_mr(g, perturb(g, {Nuisance::P, Nuisance::Mu}), t) - oracle_theta(g, t)), 1e-4);
}

TEST(Oracle, ShippedFixtureCertifies) {
  const auto& fx = test::reference_fixture();
  ASSERT_EQ(fx.golden.size(), 9u);
  for (const auto& c : certify(fx.dgp, fx.golden)) EXPECT_TRUE(c.pass()) << c.name << " " << c.discrepancy;
}

TEST(Oracle, TamperedGoldenFails) {
  auto golden = test::reference_fixture().golden;
  golden[3].value += 1e-9;
  bool failed = false;
  for (const auto& c : certify(fixture(), golden)) failed = failed || !c.pass();
  EXPECT_TRUE(failed);
}

TEST(Oracle, StrongFixtureCertifies) {
  DiscreteDgp g = fixture();
  g.mode = Monotonicity::Strong;
  for (auto& p : g.p1) p[0] = 0.0;
  for (const auto& c : certify(g)) EXPECT_TRUE(c.pass()) << c.name << " " << c.discrepancy;
}

TEST(Fixture, CorruptedPmfIsRejected) {
  auto j = fixture_json();
  j["points"][0]["r"]["11"] = {0.5, 0.6};
  EXPECT_PSMED_ERROR(parse_fixture(j), ErrorKind::InvalidDgp);
}

TEST(Fixture, UnknownKeysAndSchemaAreRejected) {
  auto j = fixture_json();
  j["points"][1]["extra"] = 1;
  EXPECT_PSMED_ERROR(parse_fixture(j), ErrorKind::InvalidDgp);
  auto k = fixture_json();
  k["schema"] = "psmed.discrete_dgp/2";
  EXPECT_PSMED_ERROR(parse_fixture(k), ErrorKind::InvalidDgp);
  auto m = fixture_json();
  m["points"][0]["r"].erase("10");
  EXPECT_PSMED_ERROR(parse_fixture(m), ErrorKind::InvalidDgp);
  EXPECT_PSMED_ERROR(load_fixture(test::source_path("data/fixtures/no_such_file.json")), ErrorKind::IoError);
}

TEST(Fixture, ExpandedPopulationReproducesLaw) {
  const DiscreteDgp& g = fixture();
  const Dataset d = expand_population(g, 512);
  EXPECT_EQ(d.n, 512u);
  double z1 = 0;
  for (int z : d.z) z1 += z;
  double pi = 0;
  for (std::size_t k = 0; k < g.points(); ++k) pi += g.x_prob[k] * g.pi1[k];
  EXPECT_DOUBLE_EQ(z1 / 512.0, pi);
  EXPECT_PSMED_ERROR(expand_population(g, 511), ErrorKind::InvalidDgp);
}
