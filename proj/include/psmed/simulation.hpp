#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "psmed/analysis.hpp"
#include "psmed/crossfit.hpp"
#include "psmed/csv.hpp"
#include "psmed/estimators.hpp"
#include "psmed/fitting.hpp"
#include "psmed/glm.hpp"
#include "psmed/inference.hpp"
#include "psmed/parallel.hpp"

namespace psmed {

// Generating model: X ~ N(0, I4); logistic Z, D, M; Gaussian Y.
struct DgpParams {
  std::array<double, 4> z_x{-1.0, 0.5, -0.25, -0.1};
  double d_0 = -1.0, d_z = 2.0;
  std::array<double, 4> d_x{1.0, -0.8, 0.6, -1.0};
  double m_0 = -1.8, m_z = 2.0, m_d = 1.5;
  std::array<double, 4> m_x{1.0, -0.5, 0.9, -1.0};
  double y_0 = 210.0, y_z = 1.5, y_d = -1.0, y_m = 1.0;
  std::array<double, 4> y_x{27.4, 13.7, 13.7, 13.7};
  double y_sd = 1.0;

  // Every path from Z to Y is cut, so all natural effects vanish.
  static DgpParams null_effects() {
    DgpParams p;
    p.y_z = 0.0;
    p.y_d = 0.0;
    p.y_m = 0.0;
    return p;
  }

  double dot(const std::array<double, 4>& c, const double* x) const { return c[0] * x[0] + c[1] * x[1] + c[2] * x[2] + c[3] * x[3]; }
  double pi1(const double* x) const { return expit(dot(z_x, x)); }
  double d_prob(int z, const double* x) const { return expit(d_0 + d_z * z + dot(d_x, x)); }
  double m_prob(int z, int d, const double* x) const { return expit(m_0 + m_z * z + m_d * d + dot(m_x, x)); }
  double y_mean(int z, int d, double m, const double* x) const { return y_0 + y_z * z + y_d * d + y_m * m + dot(y_x, x); }
};

inline constexpr std::size_t kSimColumns = 8;  // x1..x4 then the four transforms

inline std::array<double, 4> transform_covariates(const std::array<double, 4>& x) {
  const double t3 = x[1] * x[2] / 25.0 + 0.6;
  const double t4 = x[1] + x[3] + 20.0;
  return {std::exp(0.5 * x[0]), x[1] / (1.0 + x[0]), t3 * t3 * t3, t4 * t4};
}

inline std::vector<double> transform_covariates(const std::vector<double>& X, std::size_t rows) {
  if (X.size() != rows * 4) fail(ErrorKind::DimensionMismatch, "transform needs 4 columns");
  std::vector<double> out(X.size());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto t = transform_covariates(std::array<double, 4>{X[4 * i], X[4 * i + 1], X[4 * i + 2], X[4 * i + 3]});
    for (std::size_t j = 0; j < 4; ++j) out[4 * i + j] = t[j];
  }
  return out;
}

// Potential values under the shared-uniform coupling.
struct PotentialValues {
  std::vector<int> d1, d0;
  std::vector<std::array<int, 4>> m;  // M_{zd} at index 2z+d
  std::vector<double> eps;            // outcome noise shared across worlds

  Stratum stratum(std::size_t i) const { return {d1[i], d0[i]}; }
};

struct SimulatedSample {
  Dataset data;
  PotentialValues potential;
  std::size_t nonfinite_transforms = 0;
};

inline SimulatedSample simulate_with_potentials(std::size_t n, std::uint64_t seed, const DgpParams& par = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SimulatedSample s;
  Dataset& d = s.data;
  PotentialValues& pv = s.potential;
  d.n = n;
  d.p = kSimColumns;
  d.x.resize(n * kSimColumns);
  d.z.resize(n);
  d.d.resize(n);
  d.m.resize(n);
  d.y.resize(n);
  d.mediator = Mediator::binary();
  d.monotonicity = Monotonicity::Standard;
  d.covariate_names = {"x1", "x2", "x3", "x4", "xt1", "xt2", "xt3", "xt4"};
  pv.d1.resize(n);
  pv.d0.resize(n);
  pv.m.resize(n);
  pv.eps.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 4> x{};
    for (double& v : x) v = normal(rng);
    const double uz = unif(rng), ud = unif(rng), um = unif(rng);
    const double eps = normal(rng);
    const auto xt = transform_covariates(x);
    for (std::size_t j = 0; j < 4; ++j) {
      d.x[i * kSimColumns + j] = x[j];
      d.x[i * kSimColumns + 4 + j] = xt[j];
      if (!std::isfinite(xt[j])) ++s.nonfinite_transforms;
    }
    const int z = uz <= par.pi1(x.data()) ? 1 : 0;
    for (int zz = 0; zz < 2; ++zz) {
      const int dz = ud <= par.d_prob(zz, x.data()) ? 1 : 0;
      (zz == 1 ? pv.d1 : pv.d0)[i] = dz;
      for (int dd = 0; dd < 2; ++dd) pv.m[i][static_cast<std::size_t>(cell_index(zz, dd))] = um <= par.m_prob(zz, dd, x.data()) ? 1 : 0;
    }
    pv.eps[i] = eps;
    const int dobs = z == 1 ? pv.d1[i] : pv.d0[i];
    const int mobs = pv.m[i][static_cast<std::size_t>(cell_index(z, dobs))];
    d.z[i] = z;
    d.d[i] = dobs;
    d.m[i] = mobs;
    d.y[i] = par.y_mean(z, dobs, mobs, x.data()) + par.y_sd * eps;
  }
  d.cells = tabulate_cells(d.z, d.d);
  return s;
}

inline Dataset simulate(std::size_t n, std::uint64_t seed, const DgpParams& par = {}) {
  return simulate_with_potentials(n, seed, par).data;
}

// Generating nuisance functions; reads the true covariates from the first four columns.
inline NuisanceBundle true_bundle(const DgpParams& par = {}) {
  NuisanceBundle b;
  b.mediator = Mediator::binary();
  b.monotonicity = Monotonicity::Standard;
  b.pi = [par](int z, Row x) {
    const double p = par.pi1(x.data());
    return z == 1 ? p : 1.0 - p;
  };
  b.p = [par](int z, int d, Row x) {
    const double p = par.d_prob(z, x.data());
    return d == 1 ? p : 1.0 - p;
  };
  b.r = [par](int z, int d, double m, Row x) {
    const double p = par.m_prob(z, d, x.data());
    return m == 1.0 ? p : (m == 0.0 ? 1.0 - p : 0.0);
  };
  b.mu = [par](int z, int d, double m, Row x) { return par.y_mean(z, d, m, x.data()); };
  return b;
}

enum class ScenarioId { I, II, III, IV, V, VI };

inline constexpr std::array<ScenarioId, 6> kAllScenarios{ScenarioId::I, ScenarioId::II, ScenarioId::III,
                                                         ScenarioId::IV, ScenarioId::V, ScenarioId::VI};

inline std::string to_string(ScenarioId s) {
  static const char* names[] = {"I", "II", "III", "IV", "V", "VI"};
  return names[static_cast<int>(s)];
}

inline ScenarioId parse_scenario(const std::string& s) {
  for (ScenarioId id : kAllScenarios)
    if (to_string(id) == s) return id;
  fail(ErrorKind::ConfigError, "unknown scenario '" + s + "' (expected I..VI)");
}

// Which working models see the transformed covariates.
inline ModelSpec scenario_spec(ScenarioId s) {
  const FeatureSpec truth{{0, 1, 2, 3}}, transformed{{4, 5, 6, 7}};
  ModelSpec m{truth, truth, truth, truth, OutcomeKind::Continuous};
  switch (s) {
    case ScenarioId::I: break;
    case ScenarioId::II: m.pi = transformed; break;
    case ScenarioId::III: m.p = transformed; break;
    case ScenarioId::IV: m.r = transformed; break;
    case ScenarioId::V: m.mu = transformed; break;
    case ScenarioId::VI: m = {transformed, transformed, transformed, transformed, OutcomeKind::Continuous}; break;
  }
  return m;
}

struct TruthHandle {
  std::array<std::array<double, 3>, 3> theta{};  // [stratum index][pair 11, 10, 00]
  std::array<std::array<double, 3>, 3> se{};
  std::array<double, 3> e{};  // stratum proportions
  std::array<double, 3> marginal{};  // E[Y_{z M_z'}] per pair
  std::uint64_t seed = 0;
  std::size_t draws = 0;

  double get(const TargetIndex& t) const {
    return theta[static_cast<std::size_t>(t.stratum.index())][static_cast<std::size_t>(t.pair_index())];
  }
  double se_of(const TargetIndex& t) const {
    return se[static_cast<std::size_t>(t.stratum.index())][static_cast<std::size_t>(t.pair_index())];
  }
  ThetaTable table() const {
    ThetaTable tab;
    tab.theta = theta;
    tab.e = e;
    return tab;
  }
};

// Monte Carlo plug-in of the identification formula with the generating nuisances.
inline TruthHandle compute_truth(std::uint64_t seed, std::size_t draws, const DgpParams& par = {}) {
  if (draws < 1000000) fail(ErrorKind::ConfigError, "truth needs at least 10^6 draws");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::array<Stratum, 3> strata{Stratum::compliers(), Stratum::always(), Stratum::never()};
  // ratio estimators sum(a)/sum(b) with a = e * eta, b = e
  std::array<double, 3> sb{}, sbb{};
  std::array<std::array<double, 3>, 3> sa{}, saa{}, sab{};
  for (std::size_t it = 0; it < draws; ++it) {
    double x[4];
    for (double& v : x) v = normal(rng);
    const double p1 = par.d_prob(1, x), p0 = par.d_prob(0, x);
    for (const Stratum& s : strata) {
      const auto si = static_cast<std::size_t>(s.index());
      const double e = s == Stratum::compliers() ? p1 - p0 : (s == Stratum::always() ? p0 : 1.0 - p1);
      sb[si] += e;
      sbb[si] += e * e;
      for (std::size_t k = 0; k < 3; ++k) {
        const int z = kEffectPairs[k][0], zp = kEffectPairs[k][1];
        const int dz = z == 1 ? s.d1 : s.d0, dzp = zp == 1 ? s.d1 : s.d0;
        const double r1 = par.m_prob(zp, dzp, x);
        const double eta = par.y_mean(z, dz, 0.0, x) * (1.0 - r1) + par.y_mean(z, dz, 1.0, x) * r1;
        const double a = e * eta;
        sa[si][k] += a;
        saa[si][k] += a * a;
        sab[si][k] += a * e;
      }
    }
  }
  TruthHandle t;
  t.seed = seed;
  t.draws = draws;
  const double N = static_cast<double>(draws);
  for (std::size_t si = 0; si < 3; ++si) {
    t.e[si] = sb[si] / N;
    for (std::size_t k = 0; k < 3; ++k) {
      const double R = sa[si][k] / sb[si];
      const double ss = saa[si][k] - 2.0 * R * sab[si][k] + R * R * sbb[si];
      t.theta[si][k] = R;
      t.se[si][k] = std::sqrt(std::max(ss, 0.0) / (N - 1.0)) / std::sqrt(N) / t.e[si];
      t.marginal[k] += sa[si][k] / N;
    }
  }
  return t;
}

// Direct potential-outcome means E[Y_{z M_z'} | U] from coupled draws; an independent check on compute_truth.
inline TruthHandle potential_outcome_truth(std::uint64_t seed, std::size_t draws, const DgpParams& par = {}) {
  constexpr std::size_t chunk = 1000000;
  std::array<double, 3> cnt{};
  std::array<std::array<double, 3>, 3> s1{}, s2{};
  for (std::size_t start = 0, c = 0; start < draws; start += chunk, ++c) {
    const std::size_t n = std::min(chunk, draws - start);
    const SimulatedSample smp = simulate_with_potentials(n, derive_seed(seed, c), par);
    for (std::size_t i = 0; i < n; ++i) {
      const Stratum s = smp.potential.stratum(i);
      const auto si = static_cast<std::size_t>(s.index());
      cnt[si] += 1.0;
      const double* x = smp.data.x.data() + i * kSimColumns;
      for (std::size_t k = 0; k < 3; ++k) {
        const int z = kEffectPairs[k][0], zp = kEffectPairs[k][1];
        const int dz = z == 1 ? s.d1 : s.d0, dzp = zp == 1 ? s.d1 : s.d0;
        const int m = smp.potential.m[i][static_cast<std::size_t>(cell_index(zp, dzp))];
        const double y = par.y_mean(z, dz, m, x) + par.y_sd * smp.potential.eps[i];
        s1[si][k] += y;
        s2[si][k] += y * y;
      }
    }
  }
  TruthHandle t;
  t.seed = seed;
  t.draws = draws;
  for (std::size_t si = 0; si < 3; ++si) {
    t.e[si] = cnt[si] / static_cast<double>(draws);
    for (std::size_t k = 0; k < 3; ++k) {
      const double mean = s1[si][k] / cnt[si];
      const double var = (s2[si][k] - cnt[si] * mean * mean) / (cnt[si] - 1.0);
      t.theta[si][k] = mean;
      t.se[si][k] = std::sqrt(std::max(var, 0.0) / cnt[si]);
      t.marginal[k] += t.e[si] * mean;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Scenario studies

struct StudyOptions {
  TargetIndex target{1, 0, Stratum::compliers()};
  std::vector<Method> methods{Method::MR};
  Inference inference = Inference::BootstrapWald;  // for non-np methods; None skips intervals
  int B = 200;
  int V = 5;
  LearnerSpec learners = LearnerSpec::glm_and_stumps();
  ClipPolicy clip{};
  double level = 0.95;
  unsigned threads = 1;
  double max_fail_fraction = 0.05;
};

struct StudyRow {
  int rep = 0;
  Method method = Method::MR;
  double estimate = kNaN, se = kNaN, ci_low = kNaN, ci_high = kNaN;
  bool covered = false;
  std::string status = "ok";
};

struct StudySummary {
  Method method = Method::MR;
  double truth = kNaN;
  std::size_t reps = 0, ok = 0, failed = 0;
  double mean = kNaN, bias = kNaN, sd = kNaN, mc_se = kNaN, bias_z = kNaN, coverage = kNaN;
  bool low_replicate = false;
};

struct StudyResult {
  ScenarioId scenario = ScenarioId::I;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::vector<StudyRow> rows;
  std::vector<StudySummary> summary;
};

inline double point_estimate(const Dataset& data, const UnitNuisances& u, const TargetIndex& t, Method m) {
  return m == Method::MR ? theta_mr(data, u, t) : theta_moment(data, u, t, form_of(m));
}

// One replicate: every requested method on one simulated sample.
inline std::vector<StudyRow> study_replicate(ScenarioId sc, std::size_t n, std::uint64_t seed, int rep, double truth,
                                             const StudyOptions& opt, const DgpParams& par) {
  const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
  const Dataset data = simulate(n, rep_seed, par);
  const ModelSpec spec = scenario_spec(sc);
  std::vector<Method> para;
  for (Method m : opt.methods)
    if (m != Method::NP) para.push_back(m);
  std::vector<StudyRow> out;
  auto finish = [&](StudyRow& r) {
    if (std::isfinite(r.se) && !std::isfinite(r.ci_low)) std::tie(r.ci_low, r.ci_high) = wald_interval(r.estimate, r.se, opt.level);
    r.covered = std::isfinite(r.ci_low) && r.ci_low <= truth && truth <= r.ci_high;
  };
  if (!para.empty()) {
    std::vector<StudyRow> rows(para.size());
    try {
      const UnitNuisances u = evaluate_nuisances(data, fit_parametric_bundle(data, spec), opt.clip);
      for (std::size_t j = 0; j < para.size(); ++j) {
        rows[j].rep = rep;
        rows[j].method = para[j];
        try {
          rows[j].estimate = point_estimate(data, u, opt.target, para[j]);
        } catch (const Error& e) {
          rows[j].status = std::string(to_string(e.kind()));
        }
      }
      if (opt.inference == Inference::BootstrapWald || opt.inference == Inference::BootstrapPercentile) {
        BootstrapOptions bo;
        bo.B = opt.B;
        bo.seed = derive_seed(rep_seed, 0x5eed);
        bo.level = opt.level;
        const BootstrapResult br = bootstrap(
            data,
            [&](const Dataset& rs) {
              const UnitNuisances ru = evaluate_nuisances(rs, fit_parametric_bundle(rs, spec), opt.clip);
              std::vector<double> v(para.size(), kNaN);
              for (std::size_t j = 0; j < para.size(); ++j) {
                try {
                  v[j] = point_estimate(rs, ru, opt.target, para[j]);
                } catch (const Error&) {
                }
              }
              return v;
            },
            bo);
        for (std::size_t j = 0; j < para.size(); ++j) {
          rows[j].se = br.se[j];
          if (opt.inference == Inference::BootstrapPercentile) {
            rows[j].ci_low = br.ci_low[j];
            rows[j].ci_high = br.ci_high[j];
          }
          if (!std::isfinite(rows[j].se) && rows[j].status == "ok") rows[j].status = "inference_failed";
        }
      }
    } catch (const Error& e) {
      for (std::size_t j = 0; j < para.size(); ++j) {
        rows[j].rep = rep;
        rows[j].method = para[j];
        rows[j].status = std::string(to_string(e.kind()));
      }
    }
    for (auto& r : rows) {
      finish(r);
      out.push_back(r);
    }
  }
  for (Method m : opt.methods) {
    if (m != Method::NP) continue;
    StudyRow r;
    r.rep = rep;
    r.method = Method::NP;
    try {
      const NpEstimate np = theta_np(data, partition(n, opt.V, derive_seed(rep_seed, 0xf01d)), opt.learners, opt.target, spec, opt.clip);
      r.estimate = np.estimate;
      r.se = std::sqrt(np.variance);
    } catch (const Error& e) {
      r.status = std::string(to_string(e.kind()));
    }
    finish(r);
    out.push_back(r);
  }
  return out;
}

inline StudyResult run_scenario_study(ScenarioId sc, std::size_t n, int reps, std::uint64_t seed, const TruthHandle& truth,
                                      const StudyOptions& opt, const DgpParams& par = {}) {
  if (reps < 1) fail(ErrorKind::ConfigError, "reps must be positive");
  if (opt.methods.empty()) fail(ErrorKind::ConfigError, "no methods requested");
  const double target_truth = truth.get(opt.target);
  std::vector<std::vector<StudyRow>> per_rep(static_cast<std::size_t>(reps));
  parallel_for(per_rep.size(), opt.threads, [&](std::size_t r) {
    per_rep[r] = study_replicate(sc, n, seed, static_cast<int>(r), target_truth, opt, par);
  });
  StudyResult res;
  res.scenario = sc;
  res.n = n;
  res.seed = seed;
  for (auto& v : per_rep)
    for (auto& row : v) res.rows.push_back(row);
  for (Method m : opt.methods) {
    StudySummary s;
    s.method = m;
    s.truth = target_truth;
    s.reps = static_cast<std::size_t>(reps);
    s.low_replicate = reps < 100;
    double mean = 0.0, m2 = 0.0, cov = 0.0, with_ci = 0.0;
    for (const auto& row : res.rows) {
      if (row.method != m) continue;
      if (!std::isfinite(row.estimate)) {
        ++s.failed;
        continue;
      }
      ++s.ok;
      const double dlt = row.estimate - mean;
      mean += dlt / static_cast<double>(s.ok);
      m2 += dlt * (row.estimate - mean);
      if (std::isfinite(row.ci_low)) {
        with_ci += 1.0;
        cov += row.covered ? 1.0 : 0.0;
      }
    }
    if (static_cast<double>(s.failed) > opt.max_fail_fraction * reps)
      fail(ErrorKind::TooManyFailedReplicates, "scenario " + to_string(sc) + ", method " + to_string(m) + ": " +
                                                   std::to_string(s.failed) + " of " + std::to_string(reps) + " replicates failed");
    if (s.ok > 1) {
      s.mean = mean;
      s.bias = mean - target_truth;
      s.sd = std::sqrt(m2 / static_cast<double>(s.ok - 1));
      s.mc_se = s.sd / std::sqrt(static_cast<double>(s.ok));
      s.bias_z = s.bias / std::sqrt(s.mc_se * s.mc_se + truth.se_of(opt.target) * truth.se_of(opt.target));
    }
    if (with_ci > 0) s.coverage = cov / with_ci;
    res.summary.push_back(s);
  }
  return res;
}

inline void write_study_rows(const StudyResult& r, std::ostream& out) {
  out << "scenario,rep,method,estimate,se,ci_low,ci_high,covered,status\n";
  for (const auto& row : r.rows)
    out << to_string(r.scenario) << ',' << row.rep << ',' << to_string(row.method) << ',' << format_double(row.estimate) << ','
        << format_double(row.se) << ',' << format_double(row.ci_low) << ',' << format_double(row.ci_high) << ','
        << (row.covered ? 1 : 0) << ',' << row.status << '\n';
}

inline void write_study_summary(const StudyResult& r, std::ostream& out) {
  out << "scenario,n,method,truth,reps,ok,failed,mean,bias,sd,mc_se,bias_z,coverage,low_replicate\n";
  for (const auto& s : r.summary)
    out << to_string(r.scenario) << ',' << r.n << ',' << to_string(s.method) << ',' << format_double(s.truth) << ',' << s.reps << ','
        << s.ok << ',' << s.failed << ',' << format_double(s.mean) << ',' << format_double(s.bias) << ',' << format_double(s.sd) << ','
        << format_double(s.mc_se) << ',' << format_double(s.bias_z) << ',' << format_double(s.coverage) << ','
        << (s.low_replicate ? 1 : 0) << '\n';
}

}  // namespace psmed
