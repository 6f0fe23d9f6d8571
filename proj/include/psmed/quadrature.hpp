#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <vector>

namespace psmed {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Hermite rule for the weight exp(-t^2), by Golub-Welsch.
inline QuadratureRule gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    J(i, i - 1) = b;
    J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  for (int i = 0; i < n; ++i) {
    rule.nodes.push_back(es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    rule.weights.push_back(std::sqrt(std::numbers::pi) * v * v);
  }
  return rule;
}

// Rule for E[f(V)] with V ~ N(mean, sd^2): nodes sqrt(2) t_i, weights w_i / sqrt(pi).
inline const QuadratureRule& standard_normal_rule(int n = 32) {
  static const QuadratureRule rule32 = [] {
    QuadratureRule r = gauss_hermite(32);
    for (auto& t : r.nodes) t *= std::numbers::sqrt2;
    for (auto& w : r.weights) w /= std::sqrt(std::numbers::pi);
    return r;
  }();
  if (n == 32) return rule32;
  thread_local QuadratureRule other;
  other = gauss_hermite(n);
  for (auto& t : other.nodes) t *= std::numbers::sqrt2;
  for (auto& w : other.weights) w /= std::sqrt(std::numbers::pi);
  return other;
}

}  // namespace psmed
