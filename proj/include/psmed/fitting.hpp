#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "psmed/glm.hpp"
#include "psmed/learners.hpp"
#include "psmed/nuisance.hpp"

namespace psmed {

namespace detail {

constexpr std::size_t kStackFeatures = 64;

// Calls fn(const double*) on the feature vector [lead..., x[cols]...].
template <class Fn>
double with_features(std::initializer_list<double> lead, Row x, const std::vector<std::size_t>& cols, Fn&& fn) {
  const std::size_t q = lead.size() + cols.size();
  double stack_buf[kStackFeatures];
  std::vector<double> heap;
  double* buf = stack_buf;
  if (q > kStackFeatures) {
    heap.resize(q);
    buf = heap.data();
  }
  std::size_t j = 0;
  for (double v : lead) buf[j++] = v;
  for (auto c : cols) buf[j++] = x[c];
  return fn(static_cast<const double*>(buf));
}

inline void check_columns(const FeatureSpec& f, std::size_t p, const char* what) {
  for (auto c : f.columns)
    if (c >= p) fail(ErrorKind::DimensionMismatch, std::string(what) + " model uses covariate " + std::to_string(c) + " of " + std::to_string(p));
}

inline FeatureMatrix build_features(const Dataset& data, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols,
                                    const std::function<void(std::size_t, std::vector<double>&)>& lead) {
  FeatureMatrix F;
  F.rows = rows.size();
  std::vector<double> tmp;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    tmp.clear();
    lead(rows[r], tmp);
    if (r == 0) {
      F.cols = tmp.size() + cols.size();
      F.v.reserve(F.rows * F.cols);
    }
    F.v.insert(F.v.end(), tmp.begin(), tmp.end());
    for (auto c : cols) F.v.push_back(data.xv(rows[r], c));
  }
  if (rows.empty()) F.cols = cols.size();
  return F;
}

inline bool outcome_is_binary(const Dataset& data, const std::vector<std::size_t>& rows, OutcomeKind kind) {
  if (kind == OutcomeKind::Binary) return true;
  if (kind == OutcomeKind::Continuous) return false;
  for (auto i : rows)
    if (data.y[i] != 0.0 && data.y[i] != 1.0) return false;
  return true;
}

inline FitRecord record(const std::string& name, const FittedLearner& fl) {
  return {name, fl.learner, fl.converged, fl.separation, fl.iterations};
}

template <class F>
auto tagged(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("[") + name + "] " + e.what());
  }
}

}  // namespace detail

struct BundleOptions {
  LearnerSpec learners = LearnerSpec::glm_only();
  std::uint64_t seed = 0;  // inner CV seed
  Provenance::Kind kind = Provenance::Kind::Parametric;
  int fold = 0;
};

// Fits the four working models on the given training rows.
inline NuisanceBundle fit_bundle_on_rows(const Dataset& data, const std::vector<std::size_t>& rows, const ModelSpec& spec,
                                         const BundleOptions& opt = {}) {
  detail::check_columns(spec.pi, data.p, "pi");
  detail::check_columns(spec.p, data.p, "p");
  detail::check_columns(spec.r, data.p, "r");
  detail::check_columns(spec.mu, data.p, "mu");
  const bool strong = data.monotonicity == Monotonicity::Strong;
  const LearnerSpec& L = opt.learners;
  NuisanceBundle b;
  b.mediator = data.mediator;
  b.monotonicity = data.monotonicity;
  b.provenance.kind = opt.kind;
  b.provenance.fold = opt.fold;

  // pi: Z on x
  {
    FeatureMatrix F = detail::build_features(data, rows, spec.pi.columns, [](std::size_t, std::vector<double>&) {});
    std::vector<double> y;
    for (auto i : rows) y.push_back(data.z[i]);
    auto fl = std::make_shared<FittedLearner>(
        detail::tagged("pi", [&] { return select_and_fit(L, F, y, Task::Probability, derive_seed(opt.seed, 1)); }));
    b.provenance.fits.push_back(detail::record("pi", *fl));
    auto cols = spec.pi.columns;
    b.pi = [fl, cols](int z, Row x) {
      const double q = detail::with_features({}, x, cols, fl->predict);
      return z == 1 ? q : 1.0 - q;
    };
  }

  // p: D on [z, x], or on x within z = 1 under strong monotonicity
  {
    std::vector<std::size_t> prow;
    for (auto i : rows)
      if (!strong || data.z[i] == 1) prow.push_back(i);
    FeatureMatrix F = detail::build_features(data, prow, spec.p.columns, [&](std::size_t i, std::vector<double>& v) {
      if (!strong) v.push_back(data.z[i]);
    });
    std::vector<double> y;
    for (auto i : prow) y.push_back(data.d[i]);
    auto fl = std::make_shared<FittedLearner>(
        detail::tagged("p", [&] { return select_and_fit(L, F, y, Task::Probability, derive_seed(opt.seed, 2)); }));
    b.provenance.fits.push_back(detail::record("p", *fl));
    auto cols = spec.p.columns;
    if (strong) {
      b.p = [fl, cols](int z, int d, Row x) {
        if (z == 0) return d == 0 ? 1.0 : 0.0;
        const double q = detail::with_features({}, x, cols, fl->predict);
        return d == 1 ? q : 1.0 - q;
      };
    } else {
      b.p = [fl, cols](int z, int d, Row x) {
        const double q = detail::with_features({static_cast<double>(z)}, x, cols, fl->predict);
        return d == 1 ? q : 1.0 - q;
      };
    }
  }

  // r: mediator on [z, d, x]
  if (data.mediator.discrete()) {
    const int mmax = data.mediator.m_max;
    // split j models P(M = j | M <= j); level 0 gets the remaining mass
    auto splits = std::make_shared<std::vector<std::shared_ptr<FittedLearner>>>();
    for (int j = 1; j <= mmax; ++j) {
      std::vector<std::size_t> srow;
      for (auto i : rows)
        if (data.m[i] <= j) srow.push_back(i);
      FeatureMatrix F = detail::build_features(data, srow, spec.r.columns, [&](std::size_t i, std::vector<double>& v) {
        v.push_back(data.z[i]);
        v.push_back(data.d[i]);
      });
      std::vector<double> y;
      for (auto i : srow) y.push_back(data.m[i] == j ? 1.0 : 0.0);
      const std::string name = mmax == 1 ? "r" : "r[" + std::to_string(j) + "]";
      auto fl = std::make_shared<FittedLearner>(detail::tagged(
          "r", [&] { return select_and_fit(L, F, y, Task::Probability, derive_seed(opt.seed, 10 + static_cast<std::uint64_t>(j))); }));
      b.provenance.fits.push_back(detail::record(name, *fl));
      splits->push_back(fl);
    }
    auto cols = spec.r.columns;
    b.r = [splits, cols, mmax](int z, int d, double m, Row x) {
      const int level = static_cast<int>(m);
      if (level < 0 || level > mmax || static_cast<double>(level) != m) return 0.0;
      double mass = 1.0;
      for (int j = mmax; j >= 1; --j) {
        const double s = detail::with_features({static_cast<double>(z), static_cast<double>(d)}, x, cols,
                                               (*splits)[static_cast<std::size_t>(j - 1)]->predict);
        if (j == level) return mass * s;
        mass *= 1.0 - s;
      }
      return mass;
    };
  } else {
    for (const auto& c : L.candidates)
      if (c.kind != CandidateSpec::Kind::GlmBaseline)
        fail(ErrorKind::UnsupportedMediator, "learner-based fits need a discrete mediator");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(3 + spec.r.columns.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = rows[r];
      const auto ri = static_cast<Eigen::Index>(r);
      X(ri, 0) = 1.0;
      X(ri, 1) = data.z[i];
      X(ri, 2) = data.d[i];
      for (std::size_t j = 0; j < spec.r.columns.size(); ++j) X(ri, static_cast<Eigen::Index>(3 + j)) = data.xv(i, spec.r.columns[j]);
      y(ri) = data.m[i];
    }
    auto fit = std::make_shared<GlmFit>(detail::tagged("r", [&] { return fit_linear(X, y); }));
    if (fit->degenerate_variance) fail(ErrorKind::DegenerateVariance, "[r] mediator residual variance is zero");
    b.provenance.fits.push_back({"r", "glm", true, false, 1});
    auto cols = spec.r.columns;
    auto law = [fit, cols](int z, int d, Row x) {
      double mean = fit->coefficients(0) + fit->coefficients(1) * z + fit->coefficients(2) * d;
      for (std::size_t j = 0; j < cols.size(); ++j) mean += fit->coefficients(static_cast<Eigen::Index>(3 + j)) * x[cols[j]];
      return GaussianLaw{mean, std::sqrt(fit->residual_variance)};
    };
    b.mediator_law = law;
    b.r = [law](int z, int d, double m, Row x) {
      const GaussianLaw g = law(z, d, x);
      return normal_pdf(m, g.mean, g.sd);
    };
  }

  // mu: outcome on [z, d, m, x]
  {
    const bool binary = detail::outcome_is_binary(data, rows, spec.outcome);
    FeatureMatrix F = detail::build_features(data, rows, spec.mu.columns, [&](std::size_t i, std::vector<double>& v) {
      v.push_back(data.z[i]);
      v.push_back(data.d[i]);
      v.push_back(data.m[i]);
    });
    std::vector<double> y;
    for (auto i : rows) y.push_back(data.y[i]);
    auto fl = std::make_shared<FittedLearner>(detail::tagged("mu", [&] {
      return select_and_fit(L, F, y, binary ? Task::Probability : Task::Regression, derive_seed(opt.seed, 3));
    }));
    b.provenance.fits.push_back(detail::record("mu", *fl));
    auto cols = spec.mu.columns;
    b.mu = [fl, cols](int z, int d, double m, Row x) {
      return detail::with_features({static_cast<double>(z), static_cast<double>(d), m}, x, cols, fl->predict);
    };
  }
  return b;
}

inline NuisanceBundle fit_parametric_bundle(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::size_t> rows(data.n);
  for (std::size_t i = 0; i < data.n; ++i) rows[i] = i;
  return fit_bundle_on_rows(data, rows, spec, {});
}

}  // namespace psmed
