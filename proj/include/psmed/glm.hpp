#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "psmed/core.hpp"

namespace psmed {

inline double expit(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct IrlsOptions {
  double tolerance = 1e-8;  // on the max component of the mean score of the column-scaled design
  int max_iterations = 100;
  int max_halvings = 30;
  double ridge = 1e-8;
  double rank_tolerance = 1e-10;
};

struct GlmFit {
  enum class Family { Logistic, GaussianLinear };
  Family family = Family::Logistic;
  Eigen::VectorXd coefficients;  // intercept first
  double residual_variance = 0.0;
  bool converged = false;
  int iterations = 0;
  bool separation = false;
  bool degenerate_variance = false;
  double log_likelihood = 0.0;
};

namespace detail {

// Column scales used to make convergence and rank checks unit-free.
inline Eigen::VectorXd column_scales(const Eigen::MatrixXd& X) {
  Eigen::VectorXd s(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double a = X.col(j).cwiseAbs().maxCoeff();
    s(j) = (a > 0 && std::isfinite(a)) ? a : 1.0;
  }
  return s;
}

inline void check_rank(const Eigen::MatrixXd& Xs, double tol, const char* what) {
  if (Xs.rows() < Xs.cols()) fail(ErrorKind::RankDeficient, std::string(what) + ": fewer rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(tol);
  if (qr.rank() < Xs.cols())
    fail(ErrorKind::RankDeficient, std::string(what) + ": design rank " + std::to_string(qr.rank()) + " < " +
                                       std::to_string(Xs.cols()));
}

inline double bernoulli_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta(i);
    // log(1+exp(t)) computed stably
    const double softplus = t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
    ll += y(i) * t - softplus;
  }
  return ll;
}

}  // namespace detail

inline GlmFit fit_logistic(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd* offset = nullptr,
                           const IrlsOptions& opt = {}) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n || (offset && offset->size() != n)) fail(ErrorKind::DimensionMismatch, "logistic fit inputs");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) fail(ErrorKind::InvalidValue, "logistic response must be 0/1");
  if (!design.allFinite()) fail(ErrorKind::InvalidValue, "non-finite entries in logistic design");

  const Eigen::VectorXd scale = detail::column_scales(design);
  const Eigen::MatrixXd Xs = design * scale.cwiseInverse().asDiagonal();
  detail::check_rank(Xs, opt.rank_tolerance, "logistic fit");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd off = offset ? *offset : Eigen::VectorXd::Zero(n);
  Eigen::VectorXd eta = Xs * beta + off;
  double ll = detail::bernoulli_loglik(eta, y);

  GlmFit fit;
  fit.family = GlmFit::Family::Logistic;
  const double dn = static_cast<double>(n);
  for (int it = 0; it < opt.max_iterations; ++it) {
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = expit(eta(i));
      w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-300);
    }
    const Eigen::VectorXd score = Xs.transpose() * (y - mu);
    if (score.cwiseAbs().maxCoeff() / dn < opt.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::MatrixXd H = Xs.transpose() * w.asDiagonal() * Xs;
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success || !std::isfinite(llt.matrixLLT().diagonal().minCoeff()) ||
        llt.matrixLLT().diagonal().minCoeff() < 1e-7) {
      H.diagonal().array() += opt.ridge * std::max(1.0, H.diagonal().maxCoeff());
      llt.compute(H);
    }
    const Eigen::VectorXd step = llt.solve(score);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opt.max_halvings; ++h) {
      const Eigen::VectorXd cand = beta + t * step;
      const Eigen::VectorXd eta_c = Xs * cand + off;
      const double ll_c = detail::bernoulli_loglik(eta_c, y);
      if (std::isfinite(ll_c) && ll_c >= ll - 1e-12 * std::abs(ll)) {
        beta = cand;
        eta = eta_c;
        ll = std::max(ll, ll_c);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    fit.iterations = it + 1;
    if (!accepted) break;
  }
  fit.log_likelihood = ll;
  fit.coefficients = beta.cwiseQuotient(scale);
  // every row of one class fitted at its label means the likelihood has no finite maximizer
  bool pinned0 = true, pinned1 = true, has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double m = expit(eta(i));
    if (y(i) == 0.0) {
      has0 = true;
      pinned0 = pinned0 && m < 1e-6;
    } else {
      has1 = true;
      pinned1 = pinned1 && m > 1 - 1e-6;
    }
  }
  fit.separation = has0 && has1 && (pinned0 || pinned1);
  if (!fit.converged) fit.separation = fit.separation || beta.cwiseAbs().maxCoeff() > 30.0;
  if (fit.separation) fit.converged = false;
  return fit;
}

inline GlmFit fit_linear(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double rank_tolerance = 1e-10) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (y.size() != n) fail(ErrorKind::DimensionMismatch, "linear fit inputs");
  if (!design.allFinite() || !y.allFinite()) fail(ErrorKind::InvalidValue, "non-finite entries in linear fit");
  const Eigen::VectorXd scale = detail::column_scales(design);
  const Eigen::MatrixXd Xs = design * scale.cwiseInverse().asDiagonal();
  if (n < p) fail(ErrorKind::RankDeficient, "linear fit: fewer rows than columns");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(rank_tolerance);
  if (qr.rank() < p) fail(ErrorKind::RankDeficient, "linear fit: design rank " + std::to_string(qr.rank()) + " < " + std::to_string(p));
  const Eigen::VectorXd beta = qr.solve(y);
  GlmFit fit;
  fit.family = GlmFit::Family::GaussianLinear;
  fit.coefficients = beta.cwiseQuotient(scale);
  const Eigen::VectorXd resid = y - Xs * beta;
  const double rss = resid.squaredNorm();
  const double dof = static_cast<double>(n - p);
  fit.residual_variance = dof > 0 ? rss / dof : 0.0;
  // exact fits leave rounding-level residuals; treat them as zero variance
  const double yscale = std::max(1.0, y.cwiseAbs().maxCoeff());
  if (fit.residual_variance <= 1e-24 * yscale * yscale) fit.residual_variance = 0.0;
  fit.degenerate_variance = fit.residual_variance <= 0.0;
  fit.converged = true;
  fit.iterations = 1;
  return fit;
}

inline double linear_predictor(const GlmFit& fit, Row x_row) {
  if (static_cast<Eigen::Index>(x_row.size()) + 1 != fit.coefficients.size())
    fail(ErrorKind::DimensionMismatch, "row has " + std::to_string(x_row.size()) + " entries, fit expects " +
                                           std::to_string(fit.coefficients.size() - 1));
  double eta = fit.coefficients(0);
  for (std::size_t j = 0; j < x_row.size(); ++j) eta += fit.coefficients(static_cast<Eigen::Index>(j) + 1) * x_row[j];
  return eta;
}

inline double predict_mean(const GlmFit& fit, Row x_row) {
  const double eta = linear_predictor(fit, x_row);
  return fit.family == GlmFit::Family::Logistic ? expit(eta) : eta;
}

inline double normal_pdf(double v, double mean, double sd) {
  const double u = (v - mean) / sd;
  return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

inline double gaussian_density(const GlmFit& fit, double m, Row x_row) {
  if (fit.family != GlmFit::Family::GaussianLinear) fail(ErrorKind::InvalidValue, "density needs a Gaussian-linear fit");
  if (!(fit.residual_variance > 0.0)) fail(ErrorKind::DegenerateVariance, "residual variance is zero");
  return normal_pdf(m, linear_predictor(fit, x_row), std::sqrt(fit.residual_variance));
}

}  // namespace psmed
