#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psmed/estimators.hpp"
#include "psmed/fitting.hpp"
#include "psmed/learners.hpp"
#include "psmed/parallel.hpp"

namespace psmed {

struct FoldPlan {
  std::vector<int> assignments;  // 1..V
  int V = 5;
  std::uint64_t seed = 0;

  std::vector<std::size_t> training_rows(int v) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != v) out.push_back(i);
    return out;
  }
  // FNV-1a over the assignments, reported in run metadata
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (int a : assignments) {
      h ^= static_cast<std::uint64_t>(a);
      h *= 1099511628211ULL;
    }
    return h;
  }
};

inline FoldPlan partition(std::size_t n, int V, std::uint64_t seed) {
  if (V < 2 || static_cast<std::size_t>(V) > n)
    fail(ErrorKind::BadFoldCount, "need 2 <= V <= n, got V=" + std::to_string(V) + ", n=" + std::to_string(n));
  return {shuffled_round_robin(n, V, seed), V, seed};
}

inline NuisanceBundle fit_fold_bundle(const Dataset& data, const FoldPlan& plan, int v, const LearnerSpec& learners,
                                      const ModelSpec& spec) {
  if (!data.mediator.discrete()) fail(ErrorKind::UnsupportedMediator, "cross-fitting needs a discrete mediator");
  BundleOptions opt;
  opt.learners = learners;
  opt.seed = derive_seed(plan.seed, static_cast<std::uint64_t>(v));
  opt.kind = Provenance::Kind::Learner;
  opt.fold = v;
  return fit_bundle_on_rows(data, plan.training_rows(v), spec, opt);
}

inline NuisanceBundle fit_fold_bundle(const Dataset& data, const FoldPlan& plan, int v, const LearnerSpec& learners) {
  return fit_fold_bundle(data, plan, v, learners, ModelSpec::all_columns(data.p));
}

struct CrossFit {
  UnitNuisances units;
  std::vector<Provenance> folds;
};

// Each unit's nuisances come from the bundle trained without its fold.
inline CrossFit cross_fit(const Dataset& data, const FoldPlan& plan, const LearnerSpec& learners, const ModelSpec& spec,
                          const ClipPolicy& clip = {}, unsigned threads = 1) {
  if (plan.assignments.size() != data.n) fail(ErrorKind::DimensionMismatch, "fold plan length differs from n");
  std::vector<NuisanceBundle> bundles(static_cast<std::size_t>(plan.V));
  parallel_for(static_cast<std::size_t>(plan.V), threads, [&](std::size_t k) {
    bundles[k] = fit_fold_bundle(data, plan, static_cast<int>(k) + 1, learners, spec);
  });
  CrossFit cf;
  cf.units = allocate_units(data, clip);
  for (std::size_t i = 0; i < data.n; ++i) {
    const int v = plan.assignments[i];
    const NuisanceBundle& b = bundles[static_cast<std::size_t>(v - 1)];
    if (b.provenance.fold != v) fail(ErrorKind::InvalidValue, "fold tag mismatch");
    detail::fill_unit(cf.units, data, b, i);
    cf.units.fold[i] = v;
  }
  finalize_units(cf.units, data);
  for (auto& b : bundles) cf.folds.push_back(b.provenance);
  return cf;
}

struct NpEstimate {
  double estimate = 0.0;
  double variance = 0.0;
};

// Influence values (psi - theta delta) / e_hat for a target on given unit nuisances.
inline std::vector<double> theta_influence(const EifComponents& c, double theta, double e_hat) {
  std::vector<double> out(c.psi.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (c.psi[i] - theta * c.delta[i]) / e_hat;
  return out;
}

inline double influence_variance(const std::vector<double>& inf) {
  double s = 0.0;
  for (double v : inf) s += v * v;
  const double n = static_cast<double>(inf.size());
  return s / n / n;
}

inline NpEstimate theta_np(const Dataset& data, const FoldPlan& plan, const LearnerSpec& learners, const TargetIndex& t,
                           const ModelSpec& spec, const ClipPolicy& clip = {}) {
  const CrossFit cf = cross_fit(data, plan, learners, spec, clip);
  const EifComponents c = eif_components(data, cf.units, t);
  const MrEstimate m = mr_ratio(c);
  const double e_hat = detail::positive_denominator(stratum_proportion_dr(data, cf.units, t.stratum), t.stratum);
  return {m.theta, influence_variance(theta_influence(c, m.theta, e_hat))};
}

inline NpEstimate theta_np(const Dataset& data, const FoldPlan& plan, const LearnerSpec& learners, const TargetIndex& t) {
  return theta_np(data, plan, learners, t, ModelSpec::all_columns(data.p));
}

}  // namespace psmed
