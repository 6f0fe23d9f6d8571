#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "psmed/core.hpp"
#include "psmed/quadrature.hpp"

namespace psmed {

struct ClipPolicy {
  double floor = 1e-3;  // lower bound for pi, p and r when they divide
  bool strict = false;  // throw ExtremePropensity instead of clipping pi
  double max_density_ratio = 1e6;
  int quadrature_nodes = 32;
};

struct GaussianLaw {
  double mean = 0.0;
  double sd = 1.0;
};

struct FitRecord {
  std::string nuisance;  // "pi", "p", "r", "r[j]", "mu"
  std::string learner;   // "glm", "stumps", "knn"
  bool converged = true;
  bool separation = false;
  int iterations = 0;
};

struct Provenance {
  enum class Kind { Parametric, Learner };
  Kind kind = Kind::Parametric;
  int fold = 0;  // 1..V for learner bundles
  std::vector<FitRecord> fits;

  bool all_converged() const {
    return std::all_of(fits.begin(), fits.end(), [](const FitRecord& f) { return f.converged; });
  }
};

// Which covariate columns enter each working model.
struct FeatureSpec {
  std::vector<std::size_t> columns;
  bool operator==(const FeatureSpec&) const = default;
};

enum class OutcomeKind { Auto, Continuous, Binary };

struct ModelSpec {
  FeatureSpec pi, p, r, mu;
  OutcomeKind outcome = OutcomeKind::Auto;

  static ModelSpec all_columns(std::size_t p) {
    FeatureSpec f;
    for (std::size_t j = 0; j < p; ++j) f.columns.push_back(j);
    return {f, f, f, f, OutcomeKind::Auto};
  }
};

struct NuisanceBundle {
  std::function<double(int z, Row x)> pi;
  std::function<double(int z, int d, Row x)> p;
  std::function<double(int z, int d, double m, Row x)> r;
  std::function<double(int z, int d, double m, Row x)> mu;
  std::function<GaussianLaw(int z, int d, Row x)> mediator_law;  // continuous mediators only
  Mediator mediator{};
  Monotonicity monotonicity = Monotonicity::Standard;
  Provenance provenance{};
};

// p_{z*d*}(x) - k p01(x) from cell probabilities; clamp of tiny negatives is counted.
inline double principal_score_value(double p_star, double p01, Stratum s, std::size_t* clamped = nullptr) {
  const double e = p_star - s.k() * p01;
  if (e < -1e-8) fail(ErrorKind::NegativeScore, "principal score " + std::to_string(e) + " for stratum " + s.label());
  if (e < 0.0) {
    if (clamped) ++*clamped;
    return 0.0;
  }
  return e;
}

inline double principal_score(const NuisanceBundle& b, Stratum s, Row x) {
  if (!admissible(s, b.monotonicity)) fail(ErrorKind::UnsupportedTarget, "stratum " + s.label() + " not admissible");
  const double p_star = b.p(s.z_star(), s.d_star(), x);
  const double p01 = s.k() ? b.p(0, 1, x) : 0.0;
  return principal_score_value(p_star, p01, s);
}

// Integral of mu(z, d_z, m, x) against r(z', d_z', m, x) over m.
inline double eta_cells(const NuisanceBundle& b, int z, int dz, int zp, int dzp, Row x, int nodes = 32) {
  if (b.mediator.discrete()) {
    double s = 0.0;
    for (int m = 0; m <= b.mediator.m_max; ++m) s += b.mu(z, dz, m, x) * b.r(zp, dzp, m, x);
    return s;
  }
  if (!b.mediator_law) fail(ErrorKind::UnsupportedMediator, "continuous mediator bundle lacks a Gaussian law");
  const GaussianLaw law = b.mediator_law(zp, dzp, x);
  const QuadratureRule& rule = standard_normal_rule(nodes);
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double v = b.mu(z, dz, law.mean + law.sd * rule.nodes[i], x);
    if (!std::isfinite(v)) fail(ErrorKind::QuadratureOverflow, "non-finite outcome mean at a quadrature node");
    s += rule.weights[i] * v;
  }
  return s;
}

inline double eta(const NuisanceBundle& b, const TargetIndex& t, Row x, int nodes = 32) {
  return eta_cells(b, t.z, t.d_z(), t.z_prime, t.d_z_prime(), x, nodes);
}

struct ClipCounts {
  std::size_t pi = 0;
  std::size_t p = 0;
  std::size_t r = 0;
  std::size_t score = 0;  // principal scores clamped from [-1e-8, 0)
  std::size_t total() const { return pi + p + r; }
};

// Every nuisance quantity the estimators need, evaluated once per unit.
// For cross-fitting each row is filled from its own fold's bundle.
struct UnitNuisances {
  std::size_t n = 0;
  int levels = 0;  // discrete support size, 0 for continuous mediators
  Monotonicity monotonicity = Monotonicity::Standard;
  ClipPolicy clip{};
  std::vector<double> pi1;                   // P(Z=1|x)
  std::array<std::vector<double>, 2> p1;     // P(D=1|z,x)
  std::array<std::vector<double>, 4> r_obs;  // r(z,d,M_i,x_i) by cell 2z+d
  std::array<std::vector<double>, 4> mu_obs; // mu(z,d,M_i,x_i)
  std::vector<double> r_all;                 // [(i*4 + cell)*levels + m]
  std::vector<double> mu_all;
  std::array<std::vector<double>, 16> eta;   // [4*cell_mu + cell_r]
  std::array<std::vector<double>, 3> score;  // principal score by stratum index
  std::array<std::size_t, 3> negative_row{};  // first offending row, or n
  std::array<double, 3> negative_value{};
  std::vector<int> fold;                     // fold tag per row (0 when not cross-fitted)
  ClipCounts clip_counts{};

  double pi_raw(int z, std::size_t i) const { return z == 1 ? pi1[i] : 1.0 - pi1[i]; }
  double pi_den(int z, std::size_t i) const { return std::max(pi_raw(z, i), clip.floor); }
  double p_raw(int z, int d, std::size_t i) const {
    const double q = p1[static_cast<std::size_t>(z)][i];
    return d == 1 ? q : 1.0 - q;
  }
  double p_den(int z, int d, std::size_t i) const { return std::max(p_raw(z, d, i), clip.floor); }
  double r_den(int cell, std::size_t i) const { return std::max(r_obs[static_cast<std::size_t>(cell)][i], clip.floor); }
  double eta_at(int cell_mu, int cell_r, std::size_t i) const { return eta[static_cast<std::size_t>(4 * cell_mu + cell_r)][i]; }
  double r_at(std::size_t i, int cell, int m) const {
    return r_all[(i * 4 + static_cast<std::size_t>(cell)) * static_cast<std::size_t>(levels) + static_cast<std::size_t>(m)];
  }
  double mu_at(std::size_t i, int cell, int m) const {
    return mu_all[(i * 4 + static_cast<std::size_t>(cell)) * static_cast<std::size_t>(levels) + static_cast<std::size_t>(m)];
  }
  double e(Stratum s, std::size_t i) const { return score[static_cast<std::size_t>(s.index())][i]; }

  void require_stratum(Stratum s) const {
    if (!admissible(s, monotonicity)) fail(ErrorKind::UnsupportedTarget, "stratum " + s.label() + " not admissible");
    const auto k = static_cast<std::size_t>(s.index());
    if (negative_row[k] < n)
      fail(ErrorKind::NegativeScore, "principal score " + std::to_string(negative_value[k]) + " for stratum " + s.label() +
                                         " at row " + std::to_string(negative_row[k]));
  }
};

namespace detail {

inline void fill_unit(UnitNuisances& u, const Dataset& data, const NuisanceBundle& b, std::size_t i) {
  const Row x = data.row(i);
  const int L = u.levels;
  u.pi1[i] = b.pi(1, x);
  for (int z = 0; z < 2; ++z) u.p1[static_cast<std::size_t>(z)][i] = b.p(z, 1, x);
  const double mi = data.m[i];
  for (int c = 0; c < 4; ++c) {
    const int z = c / 2, d = c % 2;
    if (L > 0) {
      for (int m = 0; m < L; ++m) {
        const std::size_t k = (i * 4 + static_cast<std::size_t>(c)) * static_cast<std::size_t>(L) + static_cast<std::size_t>(m);
        u.r_all[k] = b.r(z, d, m, x);
        u.mu_all[k] = b.mu(z, d, m, x);
      }
      const int mo = static_cast<int>(mi);
      u.r_obs[static_cast<std::size_t>(c)][i] = u.r_at(i, c, mo);
      u.mu_obs[static_cast<std::size_t>(c)][i] = u.mu_at(i, c, mo);
    } else {
      u.r_obs[static_cast<std::size_t>(c)][i] = b.r(z, d, mi, x);
      u.mu_obs[static_cast<std::size_t>(c)][i] = b.mu(z, d, mi, x);
    }
  }
  for (int cm = 0; cm < 4; ++cm)
    for (int cr = 0; cr < 4; ++cr) {
      double v = 0.0;
      if (L > 0) {
        for (int m = 0; m < L; ++m) v += u.mu_at(i, cm, m) * u.r_at(i, cr, m);
      } else {
        v = eta_cells(b, cm / 2, cm % 2, cr / 2, cr % 2, x, u.clip.quadrature_nodes);
      }
      u.eta[static_cast<std::size_t>(4 * cm + cr)][i] = v;
    }
}

}  // namespace detail

inline UnitNuisances allocate_units(const Dataset& data, const ClipPolicy& clip) {
  UnitNuisances u;
  u.n = data.n;
  u.levels = data.mediator.levels();
  u.monotonicity = data.monotonicity;
  u.clip = clip;
  u.pi1.resize(u.n);
  for (auto& v : u.p1) v.resize(u.n);
  for (auto& v : u.r_obs) v.resize(u.n);
  for (auto& v : u.mu_obs) v.resize(u.n);
  for (auto& v : u.eta) v.resize(u.n);
  for (auto& v : u.score) v.resize(u.n);
  u.fold.assign(u.n, 0);
  if (u.levels > 0) {
    u.r_all.resize(u.n * 4 * static_cast<std::size_t>(u.levels));
    u.mu_all.resize(u.n * 4 * static_cast<std::size_t>(u.levels));
  }
  return u;
}

// Clip counts, strict-mode checks and principal scores once all rows are filled.
inline void finalize_units(UnitNuisances& u, const Dataset& data) {
  ClipCounts cc;
  const double fl = u.clip.floor;
  const bool strong = u.monotonicity == Monotonicity::Strong;
  for (std::size_t i = 0; i < u.n; ++i) {
    for (int z = 0; z < 2; ++z) {
      const double v = u.pi_raw(z, i);
      if (!std::isfinite(v)) fail(ErrorKind::ExtremePropensity, "non-finite treatment probability at row " + std::to_string(i));
      if (v < fl) {
        if (u.clip.strict)
          fail(ErrorKind::ExtremePropensity, "treatment probability " + std::to_string(v) + " below floor at row " + std::to_string(i));
        ++cc.pi;
      }
    }
    for (int c = 0; c < 4; ++c) {
      const int z = c / 2, d = c % 2;
      if (strong && z == 0) continue;
      const double v = u.p_raw(z, d, i);
      if (!std::isfinite(v)) fail(ErrorKind::ExtremePropensity, "non-finite cell probability at row " + std::to_string(i));
      if (v < fl) ++cc.p;
    }
    for (int c = 0; c < 4; ++c) {
      const double v = u.r_obs[static_cast<std::size_t>(c)][i];
      if (!std::isfinite(v)) fail(ErrorKind::DensityRatioOverflow, "non-finite mediator density at row " + std::to_string(i));
      if (v < fl) ++cc.r;
    }
  }
  for (int s = 0; s < 3; ++s) {
    const Stratum st = stratum_from_index(s);
    const auto k = static_cast<std::size_t>(s);
    u.negative_row[k] = u.n;
    if (!admissible(st, u.monotonicity)) continue;
    for (std::size_t i = 0; i < u.n; ++i) {
      const double pstar = u.p_raw(st.z_star(), st.d_star(), i);
      const double p01 = st.k() ? u.p_raw(0, 1, i) : 0.0;
      double e = pstar - st.k() * p01;
      if (e < -1e-8) {
        if (u.negative_row[k] == u.n) {
          u.negative_row[k] = i;
          u.negative_value[k] = e;
        }
      } else if (e < 0.0) {
        ++cc.score;
        e = 0.0;
      }
      u.score[k][i] = e;
    }
  }
  u.clip_counts = cc;
  (void)data;
}

inline UnitNuisances evaluate_nuisances(const Dataset& data, const NuisanceBundle& b, const ClipPolicy& clip = {}) {
  if (b.mediator.discrete() != data.mediator.discrete() || b.mediator.levels() != data.mediator.levels())
    fail(ErrorKind::UnsupportedMediator, "bundle and dataset disagree on the mediator");
  UnitNuisances u = allocate_units(data, clip);
  u.monotonicity = data.monotonicity;
  for (std::size_t i = 0; i < data.n; ++i) detail::fill_unit(u, data, b, i);
  finalize_units(u, data);
  return u;
}

inline double p_marginal_dr(const Dataset& data, const UnitNuisances& u, int z, int d) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double pzd = u.p_raw(z, d, i);
    const double aug = data.z[i] == z ? ((data.d[i] == d ? 1.0 : 0.0) - pzd) / u.pi_den(z, i) : 0.0;
    s += aug + pzd;
  }
  return s / static_cast<double>(data.n);
}

inline double p_marginal_dr(const Dataset& data, const NuisanceBundle& b, int z, int d, const ClipPolicy& clip = {}) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const Row x = data.row(i);
    const double pi = b.pi(z, x);
    if (!std::isfinite(pi)) fail(ErrorKind::ExtremePropensity, "non-finite treatment probability at row " + std::to_string(i));
    if (pi < clip.floor && clip.strict)
      fail(ErrorKind::ExtremePropensity, "treatment probability below floor at row " + std::to_string(i));
    const double pzd = b.p(z, d, x);
    const double aug = data.z[i] == z ? ((data.d[i] == d ? 1.0 : 0.0) - pzd) / std::max(pi, clip.floor) : 0.0;
    s += aug + pzd;
  }
  return s / static_cast<double>(data.n);
}

// Denominator p^dr_{z*d*} - k p^dr_{01} for a stratum.
inline double stratum_proportion_dr(const Dataset& data, const UnitNuisances& u, Stratum s) {
  const double a = p_marginal_dr(data, u, s.z_star(), s.d_star());
  const double b = s.k() ? p_marginal_dr(data, u, 0, 1) : 0.0;
  return a - s.k() * b;
}

}  // namespace psmed
