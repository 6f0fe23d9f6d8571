// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "psmed/cli/commands.hpp"
#include "psmed/oracle_fixture.hpp"
#include "psmed/quadrature.hpp"

using namespace psmed;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "  ok   " : "  FAIL ") + what);
  }
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const OracleFixture& fixture() {
  static const OracleFixture fx = load_fixture(std::string(PSMED_SOURCE_DIR) + "/data/fixtures/reference_dgp.json");
  return fx;
}

// ---------------------------------------------------------------------------

Outcome oracle_certification() {
  Outcome o;
  const auto& fx = fixture();
  for (const auto& c : certify(fx.dgp, fx.golden))
    o.check(c.pass(), c.name + ": " + fmt(c.discrepancy, 3) + " <= " + fmt(c.tolerance, 3));
  return o;
}

// ---------------------------------------------------------------------------

double rel_gap(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Dataset strong_subsample(const Dataset& d) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.n; ++i)
    if (!(d.z[i] == 0 && d.d[i] == 1)) keep.push_back(i);
  Dataset s = subset_rows(d, keep);
  s.monotonicity = Monotonicity::Strong;
  return validate_dataset(s);
}

Outcome sensitivity_reductions() {
  Outcome o;
  struct Case {
    std::string name;
    Dataset data;
    UnitNuisances units;
  };
  std::vector<Case> cases;
  {
    const auto& g = fixture().dgp;
    Dataset d = expand_population(g, 512);
    cases.push_back({"fixture population", d, evaluate_nuisances(d, bundle_from_dgp(g), ClipPolicy{})});
  }
  for (ScenarioId sc : {ScenarioId::I, ScenarioId::VI}) {
    const Dataset d = simulate(1000, 31 + static_cast<int>(sc));
    cases.push_back({"simulated, scenario " + to_string(sc), d, evaluate_nuisances(d, fit_parametric_bundle(d, scenario_spec(sc)), ClipPolicy{})});
  }
  {
    const Dataset d = strong_subsample(simulate(1500, 47));
    cases.push_back({"simulated, strong", d, evaluate_nuisances(d, fit_parametric_bundle(d, scenario_spec(ScenarioId::I)), ClipPolicy{})});
  }
  for (const auto& c : cases) {
    double xi_gap = 0.0, t_gap = 0.0;
    XiSpec id;
    id.mode = c.data.monotonicity;
    for (const auto& t : effect_targets(c.data.monotonicity)) {
      const double base = theta_mr(c.data, c.units, t);
      xi_gap = std::max(xi_gap, rel_gap(theta_mr_xi(c.data, c.units, id, t), base));
      if (t.z == 1 && t.z_prime == 0) t_gap = std::max(t_gap, rel_gap(theta_mr_t(c.data, c.units, TSpec{1.0}, t.stratum), base));
    }
    o.check(xi_gap <= 1e-12, c.name + ": identity xi vs mr " + fmt(xi_gap, 3));
    o.check(t_gap <= 1e-12, c.name + ": identity t vs mr " + fmt(t_gap, 3));
  }
  {
    const Case& c = cases.back();
    const EffectSelector pnie{EffectSelector::Kind::PNIE, Stratum::compliers()};
    const double ref = sensitivity_effect(c.data, c.units, XiSpec{1.0, 0.98, 1.0, 1.0, Monotonicity::Strong}, pnie);
    double gap = 0.0;
    for (double ly0 : {0.5, 0.8, 1.25, 2.0})
      gap = std::max(gap, rel_gap(sensitivity_effect(c.data, c.units, XiSpec{1.0, 0.98, 1.0, ly0, Monotonicity::Strong}, pnie), ref));
    o.check(gap <= 1e-12, "strong PNIE invariance to lambda_y0 " + fmt(gap, 3));
  }
  for (Monotonicity mode : {Monotonicity::Standard, Monotonicity::Strong}) {
    const std::string tag = mode == Monotonicity::Standard ? "standard" : "strong";
    const XiSpec spec{1.3, 0.8, 1.15, 0.9, mode};
    const XiViolationDgp v = reference_xi_design(mode, spec);
    const DiscreteDgp ov = to_observed(v);
    double gap = 0.0;
    for (const auto& t : effect_targets(mode)) gap = std::max(gap, std::abs(oracle_theta_mr_xi(ov, ov, spec, t) - oracle_sensitivity_truth(v, t)));
    o.check(gap <= 1e-10, tag + " xi-violation recovery " + fmt(gap, 3));
    const TSpec ts{1.6};
    const TViolationDgp tv = reference_t_design(mode, ts);
    const DiscreteDgp ot = to_observed(tv);
    gap = 0.0;
    for (Stratum s : strata_for_mode(mode)) gap = std::max(gap, std::abs(oracle_theta_mr_t(ot, ot, ts, s) - oracle_sensitivity_truth(tv, s)));
    o.check(gap <= 1e-10, tag + " t-violation recovery " + fmt(gap, 3));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Shared simulation runs for the bias and coverage criteria.

struct Studies {
  TruthHandle truth;
  std::map<ScenarioId, StudyResult> parametric;
  StudyResult np;
};

const StudySummary& summary_of(const StudyResult& r, Method m) {
  for (const auto& s : r.summary)
    if (s.method == m) return s;
  fail(ErrorKind::ConfigError, "method missing from study");
}

Studies run_studies(unsigned threads) {
  Studies s;
  auto t0 = std::chrono::steady_clock::now();
  s.truth = compute_truth(20240101, 10000000);
  const TargetIndex target{1, 0, Stratum::compliers()};
  std::cerr << "truth theta10_10 = " << s.truth.get(target) << " (se " << s.truth.se_of(target) << ", " << fmt(seconds_since(t0), 3) << " s)\n";
  StudyOptions opt;
  opt.methods = {Method::A, Method::B, Method::C, Method::D, Method::MR};
  opt.B = 200;
  opt.threads = threads;
  for (ScenarioId sc : kAllScenarios) {
    t0 = std::chrono::steady_clock::now();
    StudyOptions o = opt;
    // scenario VI only enters the bias pattern, so it skips the bootstrap
    o.inference = sc == ScenarioId::VI ? Inference::None : Inference::BootstrapWald;
    s.parametric[sc] = run_scenario_study(sc, 1000, 500, 1000 + static_cast<std::uint64_t>(sc), s.truth, o);
    std::cerr << "scenario " << to_string(sc) << " done in " << fmt(seconds_since(t0), 4) << " s\n";
  }
  t0 = std::chrono::steady_clock::now();
  StudyOptions np = opt;
  np.methods = {Method::NP};
  s.np = run_scenario_study(ScenarioId::I, 2000, 300, 7000, s.truth, np);
  std::cerr << "cross-fitted study done in " << fmt(seconds_since(t0), 4) << " s\n";
  return s;
}

// Scenarios in which each method's working-model requirements are met.
const std::map<Method, std::set<ScenarioId>>& licensed() {
  using S = ScenarioId;
  static const std::map<Method, std::set<ScenarioId>> m{
      {Method::A, {S::I, S::V}},   {Method::B, {S::I, S::III}}, {Method::C, {S::I, S::IV}},
      {Method::D, {S::I, S::II}}, {Method::MR, {S::I, S::II, S::III, S::IV, S::V}}};
  return m;
}

Outcome bias_suite(const Studies& st) {
  Outcome o;
  for (const auto& [method, ok_set] : licensed()) {
    bool biased_somewhere = false;
    std::string unlicensed;
    for (ScenarioId sc : kAllScenarios) {
      const StudySummary& s = summary_of(st.parametric.at(sc), method);
      const std::string tag = to_string(method) + " in " + to_string(sc) + ": bias " + fmt(s.bias) + ", z " + fmt(s.bias_z, 3);
      if (ok_set.count(sc)) {
        o.check(std::abs(s.bias_z) < 3.0, tag + " (licensed, |z| < 3)");
      } else {
        biased_somewhere = biased_somewhere || std::abs(s.bias_z) > 3.0;
        unlicensed += " " + to_string(sc) + ":" + fmt(s.bias_z, 3);
      }
    }
    if (method != Method::MR) o.check(biased_somewhere, to_string(method) + " biased (|z| > 3) in some unlicensed scenario;" + unlicensed);
  }
  return o;
}

Outcome coverage_suite(const Studies& st) {
  Outcome o;
  using S = ScenarioId;
  for (ScenarioId sc : {S::I, S::II, S::III, S::IV, S::V}) {
    const double c = summary_of(st.parametric.at(sc), Method::MR).coverage;
    o.check(c >= 0.89 && c <= 0.97, "mr coverage in " + to_string(sc) + ": " + fmt(c) + " in [0.89, 0.97]");
  }
  const double c3 = summary_of(st.parametric.at(S::III), Method::C).coverage;
  o.check(c3 < 0.85, "method c coverage in III: " + fmt(c3) + " < 0.85");
  const StudySummary& np = summary_of(st.np, Method::NP);
  o.check(np.coverage >= 0.91 && np.coverage <= 0.98,
          "np coverage (n=2000, 300 reps, I): " + fmt(np.coverage) + " in [0.91, 0.98]; bias z " + fmt(np.bias_z, 3));
  return o;
}

// ---------------------------------------------------------------------------

double irls_slope() {
  const Eigen::VectorXd truth = (Eigen::VectorXd(5) << 0.0, -1.0, 0.5, -0.25, -0.1).finished();
  std::vector<double> logn, logerr;
  for (auto [n, seeds] : {std::pair<std::size_t, int>{1000, 40}, {10000, 16}, {100000, 6}}) {
    double sq = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const Dataset d = simulate(n, derive_seed(4242, n + static_cast<std::size_t>(s)));
      Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 5);
      Eigen::VectorXd y(static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        X(r, 0) = 1.0;
        for (std::size_t j = 0; j < 4; ++j) X(r, static_cast<Eigen::Index>(j + 1)) = d.xv(i, j);
        y(r) = d.z[i];
      }
      sq += (fit_logistic(X, y).coefficients - truth).squaredNorm();
    }
    logn.push_back(std::log(static_cast<double>(n)));
    logerr.push_back(0.5 * std::log(sq / seeds));
  }
  const double mx = (logn[0] + logn[1] + logn[2]) / 3, my = (logerr[0] + logerr[1] + logerr[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (logn[static_cast<std::size_t>(i)] - mx) * (logerr[static_cast<std::size_t>(i)] - my);
    sxx += (logn[static_cast<std::size_t>(i)] - mx) * (logn[static_cast<std::size_t>(i)] - mx);
  }
  return sxy / sxx;
}

double density_mass() {
  GlmFit f;
  f.family = GlmFit::Family::GaussianLinear;
  f.coefficients = (Eigen::VectorXd(2) << 0.3, 1.1).finished();
  f.residual_variance = 0.8;
  const std::vector<double> x{0.6};
  const double mean = 0.3 + 1.1 * 0.6, sd = std::sqrt(0.8);
  const int K = 40000;
  const double a = mean - 14 * sd, h = 28 * sd / K;
  double s = 0.0;
  for (int k = 0; k <= K; ++k) s += ((k == 0 || k == K) ? 1 : (k % 2 ? 4 : 2)) * gaussian_density(f, a + k * h, Row(x));
  return s * h / 3;
}

bool decomposition_exact(const ThetaTable& tab) {
  const EffectSet d = assemble_effects(tab, Scale::Difference);
  bool ok = d.itt == d.itt_nie + d.itt_nde;
  for (const auto& s : d.strata) ok = ok && s.pce == s.pnie + s.pnde;
  bool positive = true;
  for (Stratum s : strata_for_mode(tab.monotonicity))
    for (int k = 0; k < 3; ++k) positive = positive && tab.get(s, k) > 0.0;
  if (positive) {
    const EffectSet r = assemble_effects(tab, Scale::RiskRatio);
    ok = ok && r.log_itt == r.log_itt_nie + r.log_itt_nde;
    for (const auto& s : r.strata) ok = ok && s.log_pce == s.log_pnie + s.log_pnde;
  }
  return ok;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool byte_reproducible(std::string& detail) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "psmed_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "data.csv", std::ios::binary);
    write_dataset_csv(simulate(800, 99), out);
  }
  const nlohmann::json est = {{"command", "estimate"},
                              {"data", {{"path", "data.csv"}, {"columns", {{"x", {"x1", "x2", "x3", "x4"}}}}}},
                              {"methods", {"a", "b", "c", "d", "mr", "np"}},
                              {"scales", {"difference", "ratio"}},
                              {"B", 100},
                              {"V", 5},
                              {"seed", 5}};
  const nlohmann::json sim = {{"command", "simulate"}, {"scenario", "III"}, {"n", 400}, {"reps", 20}, {"B", 50},
                              {"seed", 3},             {"truth_draws", 1000000}, {"methods", {"mr", "c", "np"}}};
  const nlohmann::json sens = {{"command", "sensitivity"},
                               {"data", {{"path", "data.csv"}, {"columns", {{"x", {"x1", "x2", "x3", "x4"}}}}}},
                               {"grid", {{"type", "t"}, {"zeta", {0.8, 1.0, 1.25}}}},
                               {"B", 60},
                               {"seed", 8}};
  struct Run {
    std::string command;
    nlohmann::json config;
    std::vector<std::string> files;
  };
  const std::vector<Run> runs{{"estimate", est, {"results.csv", "metadata.json"}},
                              {"simulate", sim, {"replicates.csv", "summary.csv", "metadata.json"}},
                              {"sensitivity", sens, {"grid.csv", "tipping.csv", "metadata.json"}}};
  bool ok = true;
  for (const auto& r : runs) {
    const fs::path cfg = dir / (r.command + ".json");
    std::ofstream(cfg) << r.config.dump(2);
    std::ostringstream err;
    const int c1 = cli::run_command(r.command, cfg.string(), (dir / (r.command + "_1")).string(), std::nullopt, err);
    const int c2 = cli::run_command(r.command, cfg.string(), (dir / (r.command + "_2")).string(), std::nullopt, err);
    bool same = c1 == 0 && c2 == 0;
    for (const auto& f : r.files) same = same && slurp(dir / (r.command + "_1") / f) == slurp(dir / (r.command + "_2") / f);
    detail += " " + r.command + (same ? ":identical" : ":DIFFERENT") + (c1 ? " exit " + std::to_string(c1) + " " + err.str() : "");
    ok = ok && same;
  }
  fs::remove_all(dir);
  return ok;
}

Outcome hygiene(const Studies* st) {
  Outcome o;
  const double slope = irls_slope();
  o.check(std::abs(slope + 0.5) <= 0.15, "IRLS error slope " + fmt(slope) + " in -0.5 +- 0.15");
  const double mass = density_mass();
  o.check(std::abs(mass - 1.0) <= 1e-8, "Gaussian density mass " + fmt(mass, 15));
  bool exact = true;
  int runs = 0;
  for (int rep = 0; rep < 40; ++rep) {
    const Dataset d = simulate(1000, derive_seed(555, static_cast<std::uint64_t>(rep)));
    const UnitNuisances u = evaluate_nuisances(d, fit_parametric_bundle(d, scenario_spec(kAllScenarios[static_cast<std::size_t>(rep % 6)])), ClipPolicy{});
    for (Method m : {Method::A, Method::B, Method::C, Method::D, Method::MR}) {
      exact = exact && decomposition_exact(theta_table(d, u, m));
      ++runs;
    }
  }
  {
    const Dataset d = simulate(1000, 556);
    const FoldPlan plan = partition(d.n, 5, 1);
    const CrossFit cf = cross_fit(d, plan, LearnerSpec::glm_and_stumps(), scenario_spec(ScenarioId::I), ClipPolicy{}, 1);
    exact = exact && decomposition_exact(theta_table(d, cf.units, Method::NP));
    ++runs;
  }
  o.check(exact, "decomposition identities bit-exact on " + std::to_string(runs) + " estimate tables");
  if (st) {
    // the shared studies must also be reproducible replicate by replicate
    StudyOptions opt;
    opt.methods = {Method::MR, Method::C};
    opt.B = 200;
    const auto again = study_replicate(ScenarioId::III, 1000, 1000 + static_cast<std::uint64_t>(ScenarioId::III), 17,
                                       st->truth.get({1, 0, Stratum::compliers()}), opt, {});
    bool same = true;
    for (const auto& row : st->parametric.at(ScenarioId::III).rows)
      if (row.rep == 17)
        for (const auto& a : again)
          if (a.method == row.method) same = same && a.estimate == row.estimate && a.se == row.se;
    o.check(same, "study replicate recomputed bit-identically");
  }
  std::string detail;
  o.check(byte_reproducible(detail), "CLI reruns byte-identical:" + detail);
  return o;
}

void report(int id, const std::string& title, const Outcome& o, double secs) {
  std::cout << "CRITERION " << id << " " << (o.pass ? "PASS" : "FAIL") << ": " << title << " (" << fmt(secs, 4) << " s)\n";
  for (const auto& n : o.notes) std::cout << n << '\n';
  std::cout.flush();
}

template <class F>
bool timed(int id, const std::string& title, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o.check(false, std::string("threw: ") + e.what());
  }
  report(id, title, o, seconds_since(t0));
  return o.pass;
}

}  // namespace

int main() {
  const unsigned threads = resolve_threads(0);
  bool all = true;
  all &= timed(1, "oracle certification on the shipped fixture", oracle_certification);
  all &= timed(2, "sensitivity reductions and violation recovery", sensitivity_reductions);

  Studies studies;
  bool studies_ok = true;
  std::string study_error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    studies = run_studies(threads);
  } catch (const std::exception& e) {
    studies_ok = false;
    study_error = e.what();
  }
  const double study_secs = seconds_since(t0);
  auto need_studies = [&](auto f) {
    return [&, f] {
      if (!studies_ok) {
        Outcome o;
        o.check(false, "simulation studies failed: " + study_error);
        return o;
      }
      return f(studies);
    };
  };
  std::cout << "simulation studies: " << fmt(study_secs, 5) << " s on " << threads << " thread(s)\n";
  all &= timed(3, "bias pattern across scenarios I-VI (n=1000, 500 reps)", need_studies(bias_suite));
  all &= timed(4, "Wald coverage with bootstrap and influence-function variance", need_studies(coverage_suite));
  all &= timed(5, "numerical hygiene and reproducibility", [&] { return hygiene(studies_ok ? &studies : nullptr); });
  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << '\n';
  return all ? 0 : 1;
}
