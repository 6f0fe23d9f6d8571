#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "psmed/glm.hpp"
#include "psmed/parallel.hpp"

namespace psmed {

// Row-major feature matrix handed to learners (no intercept column).
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  const double* row(std::size_t i) const { return v.data() + i * cols; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

enum class Task { Probability, Regression };

using Predictor = std::function<double(const double* features)>;

struct CandidateSpec {
  enum class Kind { GlmBaseline, BoostedStumps, KNearest };
  Kind kind = Kind::GlmBaseline;
  int trees = 200;
  double shrinkage = 0.1;
  int k = 10;

  static CandidateSpec glm() { return {}; }
  static CandidateSpec stumps(int trees = 200, double shrinkage = 0.1) { return {Kind::BoostedStumps, trees, shrinkage, 10}; }
  static CandidateSpec knn(int k) { return {Kind::KNearest, 200, 0.1, k}; }

  std::string name() const {
    switch (kind) {
      case Kind::GlmBaseline: return "glm";
      case Kind::BoostedStumps: return "stumps";
      case Kind::KNearest: return "knn";
    }
    return "?";
  }
};

struct LearnerSpec {
  std::vector<CandidateSpec> candidates{CandidateSpec::glm()};
  int cv_folds = 5;  // inner folds for discrete CV selection

  static LearnerSpec glm_only() { return {}; }
  static LearnerSpec glm_and_stumps() { return {{CandidateSpec::glm(), CandidateSpec::stumps()}, 5}; }
};

struct FittedLearner {
  Predictor predict;
  std::string learner;
  bool converged = true;
  bool separation = false;
  int iterations = 0;
  std::vector<double> cv_loss;  // per candidate, empty when no selection ran
};

namespace detail {

inline Eigen::MatrixXd design_with_intercept(const FeatureMatrix& F) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(F.rows), static_cast<Eigen::Index>(F.cols + 1));
  for (std::size_t i = 0; i < F.rows; ++i) {
    X(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < F.cols; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = F.at(i, j);
  }
  return X;
}

inline FittedLearner fit_glm_candidate(const FeatureMatrix& F, const std::vector<double>& y, Task task) {
  const Eigen::MatrixXd X = design_with_intercept(F);
  const Eigen::VectorXd yy = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  auto fit = std::make_shared<GlmFit>(task == Task::Probability ? fit_logistic(X, yy) : fit_linear(X, yy));
  FittedLearner out;
  out.learner = "glm";
  out.converged = fit->converged;
  out.separation = fit->separation;
  out.iterations = fit->iterations;
  const std::size_t q = F.cols;
  const bool logistic = task == Task::Probability;
  out.predict = [fit, q, logistic](const double* f) {
    double eta = fit->coefficients(0);
    for (std::size_t j = 0; j < q; ++j) eta += fit->coefficients(static_cast<Eigen::Index>(j + 1)) * f[j];
    return logistic ? expit(eta) : eta;
  };
  return out;
}

struct Stump {
  std::size_t feature = 0;
  double threshold = 0.0;  // go left when f <= threshold
  double left = 0.0;
  double right = 0.0;
};

// Gradient boosting with depth-1 trees: Newton leaves on log-loss, mean leaves on squared loss.
inline FittedLearner fit_stumps_candidate(const FeatureMatrix& F, const std::vector<double>& y, Task task, int trees,
                                          double shrinkage) {
  const std::size_t n = F.rows, q = F.cols;
  const bool logistic = task == Task::Probability;
  const std::size_t min_leaf = 5;
  std::vector<std::vector<std::size_t>> order(q, std::vector<std::size_t>(n));
  for (std::size_t j = 0; j < q; ++j) {
    std::iota(order[j].begin(), order[j].end(), std::size_t{0});
    std::stable_sort(order[j].begin(), order[j].end(), [&](std::size_t a, std::size_t b) { return F.at(a, j) < F.at(b, j); });
  }
  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double base = ybar;
  if (logistic) base = logit(std::clamp(ybar, 1e-6, 1 - 1e-6));
  std::vector<double> Fx(n, base), g(n), h(n);
  auto stumps = std::make_shared<std::vector<Stump>>();
  for (int t = 0; t < trees; ++t) {
    double G = 0, H = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (logistic) {
        const double pr = expit(Fx[i]);
        g[i] = y[i] - pr;
        h[i] = std::max(pr * (1 - pr), 1e-12);
      } else {
        g[i] = y[i] - Fx[i];
        h[i] = 1.0;
      }
      G += g[i];
      H += h[i];
    }
    double best_gain = 0.0;
    Stump best;
    bool found = false;
    for (std::size_t j = 0; j < q; ++j) {
      double GL = 0, HL = 0;
      const auto& ord = order[j];
      for (std::size_t r = 0; r + 1 < n; ++r) {
        const std::size_t i = ord[r];
        GL += g[i];
        HL += h[i];
        const double a = F.at(i, j), b = F.at(ord[r + 1], j);
        if (!(a < b) || r + 1 < min_leaf || n - r - 1 < min_leaf) continue;
        const double GR = G - GL, HR = H - HL;
        const double gain = GL * GL / HL + GR * GR / HR - G * G / H;
        if (gain > best_gain) {
          best_gain = gain;
          found = true;
          best.feature = j;
          best.threshold = std::isfinite(b) ? a + 0.5 * (b - a) : a;
          best.left = GL / HL;
          best.right = GR / HR;
        }
      }
    }
    if (!found) break;
    best.left *= shrinkage;
    best.right *= shrinkage;
    if (logistic) {
      best.left = std::clamp(best.left, -2.0, 2.0);
      best.right = std::clamp(best.right, -2.0, 2.0);
    }
    for (std::size_t i = 0; i < n; ++i) Fx[i] += F.at(i, best.feature) <= best.threshold ? best.left : best.right;
    stumps->push_back(best);
  }
  FittedLearner out;
  out.learner = "stumps";
  out.iterations = static_cast<int>(stumps->size());
  out.predict = [stumps, base, logistic](const double* f) {
    double s = base;
    for (const auto& st : *stumps) s += f[st.feature] <= st.threshold ? st.left : st.right;
    return logistic ? expit(s) : s;
  };
  return out;
}

inline FittedLearner fit_knn_candidate(const FeatureMatrix& F, const std::vector<double>& y, int k) {
  const std::size_t n = F.rows, q = F.cols;
  auto X = std::make_shared<std::vector<double>>(F.v);
  auto Y = std::make_shared<std::vector<double>>(y);
  auto scale = std::make_shared<std::vector<double>>(q, 1.0);
  for (std::size_t j = 0; j < q; ++j) {
    double m = 0, s = 0;
    for (std::size_t i = 0; i < n; ++i) m += F.at(i, j);
    m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) s += (F.at(i, j) - m) * (F.at(i, j) - m);
    s = std::sqrt(s / static_cast<double>(n));
    (*scale)[j] = s > 0 ? 1.0 / s : 1.0;
  }
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 1)), n);
  FittedLearner out;
  out.learner = "knn";
  out.predict = [X, Y, scale, n, q, kk](const double* f) {
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < q; ++j) {
        const double u = ((*X)[i * q + j] - f[j]) * (*scale)[j];
        s += u * u;
      }
      dist[i] = {s, i};
    }
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk - 1), dist.end());
    double acc = 0;
    for (std::size_t r = 0; r < kk; ++r) acc += (*Y)[dist[r].second];
    return acc / static_cast<double>(kk);
  };
  return out;
}

inline double prediction_loss(double pred, double y, Task task) {
  if (task == Task::Regression) return (pred - y) * (pred - y);
  const double pr = std::clamp(pred, 1e-6, 1 - 1e-6);
  return -(y * std::log(pr) + (1 - y) * std::log(1 - pr));
}

inline FeatureMatrix take_rows(const FeatureMatrix& F, const std::vector<std::size_t>& idx) {
  FeatureMatrix out;
  out.rows = idx.size();
  out.cols = F.cols;
  out.v.resize(out.rows * out.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(F.row(idx[r]), F.cols, out.v.begin() + static_cast<std::ptrdiff_t>(r * F.cols));
  return out;
}

}  // namespace detail

inline FittedLearner fit_candidate(const CandidateSpec& c, const FeatureMatrix& F, const std::vector<double>& y, Task task) {
  switch (c.kind) {
    case CandidateSpec::Kind::GlmBaseline: return detail::fit_glm_candidate(F, y, task);
    case CandidateSpec::Kind::BoostedStumps: return detail::fit_stumps_candidate(F, y, task, c.trees, c.shrinkage);
    case CandidateSpec::Kind::KNearest: return detail::fit_knn_candidate(F, y, c.k);
  }
  fail(ErrorKind::ConfigError, "unknown learner");
}

// Uniform integer in [0, bound) by rejection; identical across standard libraries.
inline std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t v = rng();
    if (v < limit) return v % bound;
  }
}

inline std::vector<int> shuffled_round_robin(std::size_t n, int V, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[bounded_draw(rng, i)]);
  std::vector<int> fold(n);
  for (std::size_t j = 0; j < n; ++j) fold[perm[j]] = static_cast<int>(j % static_cast<std::size_t>(V)) + 1;
  return fold;
}

// Discrete super learner: pick the candidate with the smallest inner-CV loss, refit on all rows.
inline FittedLearner select_and_fit(const LearnerSpec& spec, const FeatureMatrix& F, const std::vector<double>& y, Task task,
                                    std::uint64_t seed) {
  if (spec.candidates.empty()) fail(ErrorKind::ConfigError, "learner list is empty");
  if (spec.candidates.size() == 1) return fit_candidate(spec.candidates.front(), F, y, task);
  const int K = std::max(2, std::min<int>(spec.cv_folds, static_cast<int>(F.rows)));
  const std::vector<int> fold = shuffled_round_robin(F.rows, K, seed);
  std::vector<double> loss(spec.candidates.size(), 0.0);
  for (int v = 1; v <= K; ++v) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < F.rows; ++i) (fold[i] == v ? te : tr).push_back(i);
    const FeatureMatrix Ftr = detail::take_rows(F, tr);
    std::vector<double> ytr;
    for (auto i : tr) ytr.push_back(y[i]);
    for (std::size_t c = 0; c < spec.candidates.size(); ++c) {
      double l = 0.0;
      try {
        const FittedLearner fl = fit_candidate(spec.candidates[c], Ftr, ytr, task);
        for (auto i : te) l += detail::prediction_loss(fl.predict(F.row(i)), y[i], task);
        if (!std::isfinite(l)) l = std::numeric_limits<double>::infinity();
      } catch (const Error&) {
        l = std::numeric_limits<double>::infinity();
      }
      loss[c] += l;
    }
  }
  const std::size_t best = static_cast<std::size_t>(std::min_element(loss.begin(), loss.end()) - loss.begin());
  if (!std::isfinite(loss[best])) fail(ErrorKind::RankDeficient, "every learner candidate failed in cross-validation");
  FittedLearner out = fit_candidate(spec.candidates[best], F, y, task);
  out.cv_loss = loss;
  return out;
}

}  // namespace psmed
