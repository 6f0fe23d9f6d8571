#include <random>

#include "support.hpp"

#include "psmed/glm.hpp"
#include "psmed/quadrature.hpp"
#include "psmed/simulation.hpp"

using namespace psmed;

namespace {

Eigen::MatrixXd intercept_only(Eigen::Index n) { return Eigen::MatrixXd::Ones(n, 1); }

// Treatment-model design [1, X] and response drawn from the generating model.
void treatment_sample(std::size_t n, std::uint64_t seed, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  const Dataset d = simulate(n, seed);
  X.resize(static_cast<Eigen::Index>(n), 5);
  y.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    for (int j = 0; j < 4; ++j) X(r, j + 1) = d.xv(i, static_cast<std::size_t>(j));
    y(r) = d.z[i];
  }
}

const Eigen::VectorXd& treatment_truth() {
  static const Eigen::VectorXd b = (Eigen::VectorXd(5) << 0.0, -1.0, 0.5, -0.25, -0.1).finished();
  return b;
}

}  // namespace

TEST(Logistic, InterceptOnlyBalanced) {
  Eigen::VectorXd y(4);
  y << 0, 1, 0, 1;
  const GlmFit f = fit_logistic(intercept_only(4), y);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.coefficients(0), 0.0, 1e-10);
}

TEST(Logistic, InterceptOnlyClosedForm) {
  Eigen::VectorXd y(8);
  y << 1, 1, 1, 0, 1, 1, 1, 0;
  const GlmFit f = fit_logistic(intercept_only(8), y);
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.coefficients(0), std::log(3.0), 1e-7);
}

TEST(Logistic, RecoversGeneratingCoefficients) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  treatment_sample(100000, 42, X, y);
  const GlmFit f = fit_logistic(X, y);
  ASSERT_TRUE(f.converged);
  // standard errors from the observed information at the fit
  Eigen::VectorXd w(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double m = expit(X.row(i).dot(f.coefficients));
    w(i) = m * (1 - m);
  }
  const Eigen::MatrixXd cov = (X.transpose() * w.asDiagonal() * X).inverse();
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_LT(std::abs(f.coefficients(j) - treatment_truth()(j)), 3.0 * std::sqrt(cov(j, j))) << j;
}

TEST(Logistic, ScoreIsZeroAtConvergence) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  treatment_sample(5000, 3, X, y);
  const GlmFit f = fit_logistic(X, y);
  ASSERT_TRUE(f.converged);
  Eigen::VectorXd mu(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) mu(i) = expit(X.row(i).dot(f.coefficients));
  const Eigen::VectorXd score = X.transpose() * (y - mu) / static_cast<double>(X.rows());
  EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Logistic, FitMaximizesLikelihoodLocally) {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  treatment_sample(3000, 9, X, y);
  const GlmFit f = fit_logistic(X, y);
  auto loglik = [&](const Eigen::VectorXd& b) { return detail::bernoulli_loglik(X * b, y); };
  const double best = loglik(f.coefficients);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 0.05);
  for (int k = 0; k < 50; ++k) {
    Eigen::VectorXd b = f.coefficients;
    for (Eigen::Index j = 0; j < b.size(); ++j) b(j) += nd(rng);
    EXPECT_LE(loglik(b), best + 1e-9);
  }
}

TEST(Logistic, ErrorShrinksAtRootNRate) {
  std::vector<double> logn, logerr;
  for (auto [n, seeds] : {std::pair<std::size_t, int>{1000, 40}, {10000, 16}, {100000, 6}}) {
    double sq = 0.0;
    for (int s = 0; s < seeds; ++s) {
      Eigen::MatrixXd X;
      Eigen::VectorXd y;
      treatment_sample(n, derive_seed(777, static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(s)), X, y);
      sq += (fit_logistic(X, y).coefficients - treatment_truth()).squaredNorm();
    }
    logn.push_back(std::log(static_cast<double>(n)));
    logerr.push_back(0.5 * std::log(sq / seeds));
  }
  const double mx = (logn[0] + logn[1] + logn[2]) / 3, my = (logerr[0] + logerr[1] + logerr[2]) / 3;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 3; ++i) {
    sxy += (logn[i] - mx) * (logerr[i] - my);
    sxx += (logn[i] - mx) * (logn[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.15);
}

TEST(Logistic, SeparationIsFlaggedNotThrown) {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(6);
  y << 0, 0, 0, 1, 1, 1;
  const GlmFit f = fit_logistic(X, y);
  EXPECT_FALSE(f.converged);
  EXPECT_TRUE(f.separation);
}

TEST(Logistic, RankDeficientDesign) {
  Eigen::MatrixXd X(5, 3);
  X << 1, 1, 1, 1, 2, 2, 1, 3, 3, 1, 4, 4, 1, 5, 5;
  Eigen::VectorXd y(5);
  y << 0, 1, 0, 1, 1;
  EXPECT_PSMED_ERROR(fit_logistic(X, y), ErrorKind::RankDeficient);
}

TEST(Linear, ExactFitFlagsDegenerateVariance) {
  Eigen::VectorXd y = Eigen::VectorXd::Constant(5, 2.0);
  const GlmFit f = fit_linear(intercept_only(5), y);
  EXPECT_NEAR(f.coefficients(0), 2.0, 1e-12);
  EXPECT_EQ(f.residual_variance, 0.0);
  EXPECT_TRUE(f.degenerate_variance);
  const std::vector<double> none;
  EXPECT_PSMED_ERROR(gaussian_density(f, 2.0, Row(none)), ErrorKind::DegenerateVariance);
}

TEST(Linear, SlopeWithinThreeStandardErrors) {
  const std::size_t n = 100000;
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 2);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = nd(rng);
    y(i) = X(i, 1) + nd(rng);
  }
  const GlmFit f = fit_linear(X, y);
  const double se = std::sqrt(f.residual_variance * (X.transpose() * X).inverse()(1, 1));
  EXPECT_LT(std::abs(f.coefficients(1) - 1.0), 3 * se);
  EXPECT_NEAR(f.residual_variance, 1.0, 0.02);
}

TEST(Linear, ResidualVarianceUsesResidualDegreesOfFreedom) {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0, 1, 1, 1, 2, 1, 3;
  Eigen::VectorXd y(4);
  y << 0, 2, 1, 3;
  const GlmFit f = fit_linear(X, y);
  // slope 0.8, intercept 0.3, residuals -0.3, 0.9, -0.9, 0.3
  EXPECT_NEAR(f.coefficients(1), 0.8, 1e-12);
  EXPECT_NEAR(f.residual_variance, 1.8 / 2.0, 1e-12);
}

TEST(Linear, DuplicatedColumnIsRankDeficient) {
  Eigen::MatrixXd X(4, 3);
  X << 1, 0, 0, 1, 1, 1, 1, 2, 2, 1, 3, 3;
  Eigen::VectorXd y(4);
  y << 0, 2, 1, 3;
  EXPECT_PSMED_ERROR(fit_linear(X, y), ErrorKind::RankDeficient);
}

TEST(Predict, ClosedForms) {
  GlmFit logistic;
  logistic.coefficients = Eigen::VectorXd::Zero(1);
  const std::vector<double> none, three{3.0}, one{1.0};
  EXPECT_DOUBLE_EQ(predict_mean(logistic, Row(none)), 0.5);
  GlmFit lin;
  lin.family = GlmFit::Family::GaussianLinear;
  lin.coefficients = (Eigen::VectorXd(2) << 1, 2).finished();
  EXPECT_DOUBLE_EQ(predict_mean(lin, Row(three)), 7.0);
  logistic.coefficients = (Eigen::VectorXd(2) << -1, 2).finished();
  EXPECT_NEAR(predict_mean(logistic, Row(one)), 0.7310585786300049, 1e-15);
  EXPECT_PSMED_ERROR(predict_mean(logistic, Row(none)), ErrorKind::DimensionMismatch);
}

TEST(Predict, LogisticStaysInsideUnitInterval) {
  GlmFit f;
  f.coefficients = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
  for (double v : {-30.0, -5.0, 0.0, 5.0, 30.0}) {
    const std::vector<double> x{v};
    const double p = predict_mean(f, Row(x));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Density, StandardNormalValues) {
  GlmFit f;
  f.family = GlmFit::Family::GaussianLinear;
  f.coefficients = Eigen::VectorXd::Zero(1);
  f.residual_variance = 1.0;
  const std::vector<double> none;
  EXPECT_NEAR(gaussian_density(f, 0.0, Row(none)), 0.3989422804014327, 1e-15);
  EXPECT_DOUBLE_EQ(gaussian_density(f, 1.0, Row(none)), gaussian_density(f, -1.0, Row(none)));
}

TEST(Density, IntegratesToOne) {
  GlmFit f;
  f.family = GlmFit::Family::GaussianLinear;
  f.coefficients = (Eigen::VectorXd(2) << 1.5, -0.7).finished();
  f.residual_variance = 2.3;
  const std::vector<double> x{0.4};
  const double mean = 1.5 - 0.7 * 0.4, sd = std::sqrt(2.3);
  // 64-node Gauss-Hermite after the change of variable m = mean + sqrt(2) sd t
  const QuadratureRule rule = gauss_hermite(64);
  double gh = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double t = rule.nodes[i];
    gh += rule.weights[i] * std::exp(t * t) * gaussian_density(f, mean + std::numbers::sqrt2 * sd * t, Row(x)) * std::numbers::sqrt2 * sd;
  }
  EXPECT_NEAR(gh, 1.0, 1e-8);
  // composite Simpson over +-12 sd as an independent check
  const int K = 20000;
  const double a = mean - 12 * sd, h = 24 * sd / K;
  double simpson = 0.0;
  for (int k = 0; k <= K; ++k) {
    const double c = (k == 0 || k == K) ? 1 : (k % 2 ? 4 : 2);
    simpson += c * gaussian_density(f, a + k * h, Row(x));
  }
  EXPECT_NEAR(simpson * h / 3, 1.0, 1e-8);
}

TEST(Quadrature, HermiteRuleIsExactForPolynomials) {
  const QuadratureRule& r = standard_normal_rule(32);
  double m0 = 0, m2 = 0, m4 = 0, m6 = 0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const double v = r.nodes[i];
    m0 += r.weights[i];
    m2 += r.weights[i] * v * v;
    m4 += r.weights[i] * std::pow(v, 4);
    m6 += r.weights[i] * std::pow(v, 6);
  }
  EXPECT_NEAR(m0, 1.0, 1e-13);
  EXPECT_NEAR(m2, 1.0, 1e-12);
  EXPECT_NEAR(m4, 3.0, 1e-11);
  EXPECT_NEAR(m6, 15.0, 1e-10);
}
