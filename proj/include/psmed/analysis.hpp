#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "psmed/crossfit.hpp"
#include "psmed/estimators.hpp"
#include "psmed/fitting.hpp"
#include "psmed/inference.hpp"

namespace psmed {

// One reported quantity. Ratio-scale quantities are carried as logs until reporting.
struct Estimand {
  std::string name;
  std::string scale;  // "theta", "difference" or "ratio"
  double value = 0.0;
};

inline std::vector<Estimand> estimands_from_table(const ThetaTable& tab, const std::vector<Scale>& scales) {
  std::vector<Estimand> out;
  static const char* pair_names[3] = {"11", "10", "00"};
  for (Stratum s : strata_for_mode(tab.monotonicity))
    for (int k = 0; k < 3; ++k) out.push_back({"theta" + s.label() + "_" + pair_names[k], "theta", tab.get(s, k)});
  for (Scale sc : scales) {
    const EffectSet es = assemble_effects(tab, sc);
    if (sc == Scale::Difference) {
      for (auto& [name, v] : es.flatten()) out.push_back({name, "difference", v});
    } else {
      for (const auto& s : es.strata) {
        out.push_back({"PNIE_" + s.stratum.label() + "_RR", "ratio", s.log_pnie});
        out.push_back({"PNDE_" + s.stratum.label() + "_RR", "ratio", s.log_pnde});
        out.push_back({"PCE_" + s.stratum.label() + "_RR", "ratio", s.log_pce});
      }
      out.push_back({"ITT_NIE_RR", "ratio", es.log_itt_nie});
      out.push_back({"ITT_NDE_RR", "ratio", es.log_itt_nde});
      out.push_back({"ITT_RR", "ratio", es.log_itt});
    }
  }
  return out;
}

// Influence values for every estimand on the np (or mr) path, aligned with estimands_from_table.
inline std::vector<std::vector<double>> estimand_influences(const Dataset& data, const UnitNuisances& u, const ThetaTable& tab,
                                                            const std::vector<Scale>& scales) {
  const std::size_t n = data.n;
  const auto strata = strata_for_mode(tab.monotonicity);
  std::array<std::array<std::vector<double>, 3>, 3> inf;  // theta influences [stratum][pair]
  std::array<std::vector<double>, 3> marg;                // influences of E[Y_{z M_z'}]
  std::array<double, 3> marg_val{0, 0, 0};
  for (auto& m : marg) m.assign(n, 0.0);
  for (Stratum s : strata) {
    const auto si = static_cast<std::size_t>(s.index());
    for (std::size_t k = 0; k < 3; ++k) {
      const TargetIndex t{kEffectPairs[k][0], kEffectPairs[k][1], s};
      const EifComponents c = eif_components(data, u, t);
      inf[si][k] = theta_influence(c, tab.theta[si][k], tab.e[si]);
      const double pm = tab.psi_mean[si][k];
      for (std::size_t i = 0; i < n; ++i) marg[k][i] += c.psi[i] - pm;
      marg_val[k] += pm;
    }
  }
  std::vector<std::vector<double>> out;
  for (Stratum s : strata)
    for (std::size_t k = 0; k < 3; ++k) out.push_back(inf[static_cast<std::size_t>(s.index())][k]);
  auto lin = [n](const std::vector<double>& a, double ca, const std::vector<double>& b, double cb) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = ca * a[i] + cb * b[i];
    return r;
  };
  for (Scale sc : scales) {
    const bool ratio = sc == Scale::RiskRatio;
    for (Stratum s : strata) {
      const auto si = static_cast<std::size_t>(s.index());
      const double w11 = ratio ? 1.0 / tab.theta[si][0] : 1.0;
      const double w10 = ratio ? 1.0 / tab.theta[si][1] : 1.0;
      const double w00 = ratio ? 1.0 / tab.theta[si][2] : 1.0;
      out.push_back(lin(inf[si][0], w11, inf[si][1], -w10));
      out.push_back(lin(inf[si][1], w10, inf[si][2], -w00));
      out.push_back(lin(inf[si][0], w11, inf[si][2], -w00));
    }
    const double m0 = ratio ? 1.0 / marg_val[0] : 1.0;
    const double m1 = ratio ? 1.0 / marg_val[1] : 1.0;
    const double m2 = ratio ? 1.0 / marg_val[2] : 1.0;
    out.push_back(lin(marg[0], m0, marg[1], -m1));
    out.push_back(lin(marg[1], m1, marg[2], -m2));
    out.push_back(lin(marg[0], m0, marg[2], -m2));
  }
  return out;
}

struct AnalysisConfig {
  ModelSpec spec;
  std::vector<Method> methods{Method::MR};
  std::vector<Scale> scales{Scale::Difference};
  Inference inference = Inference::BootstrapPercentile;  // for moment and mr paths
  int B = 1000;
  std::uint64_t seed = 1;
  int V = 5;
  LearnerSpec learners = LearnerSpec::glm_and_stumps();
  ClipPolicy clip{};
  double level = 0.95;
  unsigned threads = 1;
};

struct AnalysisDiagnostics {
  ClipCounts clip_counts{};
  std::vector<FitRecord> fits;  // parametric fit on the full data
  std::vector<Provenance> folds;
  std::uint64_t fold_plan_hash = 0;
  std::size_t failed_replicates = 0;
};

struct AnalysisOutput {
  std::vector<EstimateResult> results;
  AnalysisDiagnostics diagnostics;
};

inline EstimateResult make_result(const Estimand& e, Method method, Inference inf, int resamples, std::uint64_t seed) {
  EstimateResult r;
  r.estimand = e.name;
  r.scale = e.scale;
  r.point = e.scale == "ratio" ? std::exp(e.value) : e.value;
  r.method = method;
  r.inference = inf;
  r.resamples = resamples;
  r.seed = seed;
  return r;
}

// se and interval for an estimand on its native (log for ratios) scale.
inline void attach_interval(EstimateResult& r, const Estimand& e, double se, double lo, double hi, bool percentile, double level) {
  r.se = se;
  if (!std::isfinite(se)) {
    r.status = "inference_failed";
    return;
  }
  if (!percentile) std::tie(lo, hi) = wald_interval(e.value, se, level);
  if (e.scale == "ratio") {
    lo = std::exp(lo);
    hi = std::exp(hi);
  }
  r.ci_low = lo;
  r.ci_high = hi;
}

inline ThetaTable parametric_table(const Dataset& data, const AnalysisConfig& cfg, Method m, UnitNuisances* keep = nullptr) {
  const NuisanceBundle b = fit_parametric_bundle(data, cfg.spec);
  UnitNuisances u = evaluate_nuisances(data, b, cfg.clip);
  ThetaTable tab = theta_table(data, u, m);
  if (keep) *keep = std::move(u);
  return tab;
}

inline AnalysisOutput run_analysis(const Dataset& data, const AnalysisConfig& cfg) {
  AnalysisOutput out;
  std::vector<Method> boot_methods;
  for (Method m : cfg.methods)
    if (m != Method::NP) boot_methods.push_back(m);

  if (!boot_methods.empty()) {
    const NuisanceBundle b = fit_parametric_bundle(data, cfg.spec);
    out.diagnostics.fits = b.provenance.fits;
    const UnitNuisances u = evaluate_nuisances(data, b, cfg.clip);
    out.diagnostics.clip_counts = u.clip_counts;
    std::vector<std::vector<Estimand>> points;
    for (Method m : boot_methods) points.push_back(estimands_from_table(theta_table(data, u, m), cfg.scales));

    BootstrapResult br;
    const bool boot = cfg.inference == Inference::BootstrapPercentile || cfg.inference == Inference::BootstrapWald;
    if (boot) {
      BootstrapOptions bo;
      bo.B = cfg.B;
      bo.seed = cfg.seed;
      bo.level = cfg.level;
      bo.threads = cfg.threads;
      br = bootstrap(
          data,
          [&](const Dataset& rs) {
            const NuisanceBundle rb = fit_parametric_bundle(rs, cfg.spec);
            const UnitNuisances ru = evaluate_nuisances(rs, rb, cfg.clip);
            std::vector<double> v;
            for (Method m : boot_methods)
              for (const auto& e : estimands_from_table(theta_table(rs, ru, m), cfg.scales)) v.push_back(e.value);
            return v;
          },
          bo);
      out.diagnostics.failed_replicates = br.failed_replicates;
    }
    std::size_t j = 0;
    for (std::size_t mi = 0; mi < boot_methods.size(); ++mi)
      for (const auto& e : points[mi]) {
        EstimateResult r = make_result(e, boot_methods[mi], cfg.inference, boot ? cfg.B : 0, cfg.seed);
        if (boot) attach_interval(r, e, br.se[j], br.ci_low[j], br.ci_high[j], cfg.inference == Inference::BootstrapPercentile, cfg.level);
        out.results.push_back(r);
        ++j;
      }
  }

  for (Method m : cfg.methods) {
    if (m != Method::NP) continue;
    const FoldPlan plan = partition(data.n, cfg.V, cfg.seed);
    const CrossFit cf = cross_fit(data, plan, cfg.learners, cfg.spec, cfg.clip, cfg.threads);
    out.diagnostics.folds = cf.folds;
    out.diagnostics.fold_plan_hash = plan.hash();
    if (out.diagnostics.fits.empty()) out.diagnostics.clip_counts = cf.units.clip_counts;
    const ThetaTable tab = theta_table(data, cf.units, Method::NP);
    const auto ests = estimands_from_table(tab, cfg.scales);
    const auto infl = estimand_influences(data, cf.units, tab, cfg.scales);
    for (std::size_t j = 0; j < ests.size(); ++j) {
      EstimateResult r = make_result(ests[j], Method::NP, Inference::EifWald, cfg.V, cfg.seed);
      attach_interval(r, ests[j], std::sqrt(influence_variance(infl[j])), 0, 0, false, cfg.level);
      out.results.push_back(r);
    }
  }
  return out;
}

}  // namespace psmed
