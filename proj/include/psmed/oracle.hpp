#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "psmed/core.hpp"
#include "psmed/estimators.hpp"
#include "psmed/nuisance.hpp"
#include "psmed/sensitivity.hpp"

namespace psmed {

// Fully specified finite law of (X, Z, D, M) plus outcome means. Tables are indexed
// [point][2z+d][m]; p1[point][z] is P(D=1 | Z=z, X).
struct DiscreteDgp {
  Monotonicity mode = Monotonicity::Standard;
  int m_max = 1;
  std::vector<double> x_prob;
  std::vector<std::vector<double>> x_features;  // covariate values per point, used for datasets
  std::vector<double> pi1;
  std::vector<std::array<double, 2>> p1;
  std::vector<std::array<std::vector<double>, 4>> r;
  std::vector<std::array<std::vector<double>, 4>> mu;

  std::size_t points() const { return x_prob.size(); }
  int levels() const { return m_max + 1; }
  double pi(std::size_t k, int z) const { return z == 1 ? pi1[k] : 1.0 - pi1[k]; }
  double p(std::size_t k, int z, int d) const { return d == 1 ? p1[k][static_cast<std::size_t>(z)] : 1.0 - p1[k][static_cast<std::size_t>(z)]; }
  double rv(std::size_t k, int z, int d, int m) const { return r[k][static_cast<std::size_t>(cell_index(z, d))][static_cast<std::size_t>(m)]; }
  double muv(std::size_t k, int z, int d, int m) const { return mu[k][static_cast<std::size_t>(cell_index(z, d))][static_cast<std::size_t>(m)]; }
  // principal score from the cell probabilities
  double score(std::size_t k, Stratum s) const {
    if (s == Stratum::compliers()) return p1[k][1] - p1[k][0];
    if (s == Stratum::always()) return p1[k][0];
    return 1.0 - p1[k][1];
  }
};

inline void validate(const DiscreteDgp& g) {
  auto bad = [](const std::string& m) { fail(ErrorKind::InvalidDgp, m); };
  const std::size_t K = g.points();
  if (K == 0) bad("empty covariate support");
  if (g.m_max < 1) bad("m_max must be at least 1");
  if (g.pi1.size() != K || g.p1.size() != K || g.r.size() != K || g.mu.size() != K) bad("table sizes differ from the support size");
  if (!g.x_features.empty() && g.x_features.size() != K) bad("x_features size differs from the support size");
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const std::string at = " at point " + std::to_string(k);
    if (!(g.x_prob[k] > 0.0)) bad("covariate probability must be positive" + at);
    total += g.x_prob[k];
    if (!(g.pi1[k] > 0.0 && g.pi1[k] < 1.0)) bad("P(Z=1|x) must lie in (0,1)" + at);
    const double q1 = g.p1[k][1], q0 = g.p1[k][0];
    if (!(q1 > 0.0 && q1 < 1.0)) bad("P(D=1|Z=1,x) must lie in (0,1)" + at);
    if (g.mode == Monotonicity::Strong) {
      if (q0 != 0.0) bad("strong monotonicity requires P(D=1|Z=0,x) = 0" + at);
    } else {
      if (!(q0 > 0.0 && q0 < 1.0)) bad("P(D=1|Z=0,x) must lie in (0,1)" + at);
      if (!(q1 > q0)) bad("standard monotonicity requires P(D=1|Z=1,x) > P(D=1|Z=0,x)" + at);
    }
    for (int c = 0; c < 4; ++c) {
      const bool used = !(g.mode == Monotonicity::Strong && c == cell_index(0, 1));
      const auto& pmf = g.r[k][static_cast<std::size_t>(c)];
      const auto& mm = g.mu[k][static_cast<std::size_t>(c)];
      if (pmf.size() != static_cast<std::size_t>(g.levels()) || mm.size() != static_cast<std::size_t>(g.levels()))
        bad("mediator tables need m_max+1 entries" + at);
      if (!used) continue;
      double s = 0.0;
      for (double v : pmf) {
        if (!(v > 0.0)) bad("mediator pmf entries must be positive" + at);
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-12) bad("mediator pmf of cell " + std::to_string(c) + " sums to " + std::to_string(s) + at);
      for (double v : mm)
        if (!std::isfinite(v)) bad("outcome mean must be finite" + at);
    }
  }
  if (std::abs(total - 1.0) > 1e-12) bad("covariate probabilities sum to " + std::to_string(total));
}

// Exact expectation of f(point, z, d, m, y) over the law with y replaced by its conditional mean.
inline double population_mean(const DiscreteDgp& g, const std::function<double(std::size_t, int, int, int, double)>& f) {
  double acc = 0.0;
  for (std::size_t k = 0; k < g.points(); ++k)
    for (int z = 0; z < 2; ++z)
      for (int d = 0; d < 2; ++d) {
        const double w = g.x_prob[k] * g.pi(k, z) * g.p(k, z, d);
        if (w == 0.0) continue;
        for (int m = 0; m <= g.m_max; ++m) acc += w * g.rv(k, z, d, m) * f(k, z, d, m, g.muv(k, z, d, m));
      }
  return acc;
}

namespace oracle_detail {

inline void check_target(const DiscreteDgp& g, const TargetIndex& t) {
  if (t.z == 0 && t.z_prime == 1) fail(ErrorKind::UnsupportedTarget, "pair (0,1) does not enter any effect");
  if (!admissible(t.stratum, g.mode)) fail(ErrorKind::UnsupportedTarget, "stratum " + t.stratum.label() + " not admissible");
}

inline double eta(const DiscreteDgp& g, std::size_t k, const TargetIndex& t) {
  double s = 0.0;
  for (int m = 0; m <= g.m_max; ++m) s += g.muv(k, t.z, t.d_z(), m) * g.rv(k, t.z_prime, t.d_z_prime(), m);
  return s;
}

inline double stratum_mass(const DiscreteDgp& g, Stratum s) {
  double e = 0.0;
  for (std::size_t k = 0; k < g.points(); ++k) e += g.x_prob[k] * g.score(k, s);
  return e;
}

inline double augmentation(const DiscreteDgp& w, std::size_t k, Stratum s, int z, int d) {
  const int zs = s.z_star(), ds = s.d_star();
  double a = 0.0;
  if (z == zs) a += ((d == ds ? 1.0 : 0.0) - w.p(k, zs, ds)) / w.pi(k, zs);
  if (s.k() && z == 0) a -= (d - w.p(k, 0, 1)) / w.pi(k, 0);
  return a;
}

}  // namespace oracle_detail

// Identification formula summed over the support.
inline double oracle_theta(const DiscreteDgp& g, const TargetIndex& t) {
  validate(g);
  oracle_detail::check_target(g, t);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.points(); ++k) {
    const double e = g.score(k, t.stratum);
    num += g.x_prob[k] * e * oracle_detail::eta(g, k, t);
    den += g.x_prob[k] * e;
  }
  return num / den;
}

inline double oracle_stratum_mass(const DiscreteDgp& g, Stratum s) { return oracle_detail::stratum_mass(g, s); }

// Population value of the doubly robust cell probability with working nuisances w.
inline double oracle_p_dr(const DiscreteDgp& truth, const DiscreteDgp& w, int z, int d) {
  return population_mean(truth, [&](std::size_t k, int zz, int dd, int, double) {
    const double pz = w.p(k, z, d);
    return (zz == z ? ((dd == d ? 1.0 : 0.0) - pz) / w.pi(k, z) : 0.0) + pz;
  });
}

inline double oracle_stratum_dr(const DiscreteDgp& truth, const DiscreteDgp& w, Stratum s) {
  const double a = oracle_p_dr(truth, w, s.z_star(), s.d_star());
  return s.k() ? a - oracle_p_dr(truth, w, 0, 1) : a;
}

inline double oracle_moment_expectation(const DiscreteDgp& truth, const DiscreteDgp& w, const TargetIndex& t, MomentForm form) {
  validate(truth);
  oracle_detail::check_target(truth, t);
  const Stratum s = t.stratum;
  const int z = t.z, dz = t.d_z(), zp = t.z_prime, dzp = t.d_z_prime();
  const double num = population_mean(truth, [&](std::size_t k, int zz, int dd, int m, double y) {
    const double e = w.score(k, s);
    switch (form) {
      case MomentForm::A:
        if (zz != z || dd != dz) return 0.0;
        return e / (w.p(k, z, dz) * w.pi(k, z)) * w.rv(k, zp, dzp, m) / w.rv(k, z, dz, m) * y;
      case MomentForm::B: {
        double a = 0.0;
        if (zz == s.z_star() && dd == s.d_star()) a += 1.0 / w.pi(k, s.z_star());
        if (s.k() && zz == 0 && dd == 1) a -= 1.0 / w.pi(k, 0);
        return a * oracle_detail::eta(w, k, t);
      }
      case MomentForm::C:
        if (zz != zp || dd != dzp) return 0.0;
        return e / (w.p(k, zp, dzp) * w.pi(k, zp)) * w.muv(k, z, dz, m);
      case MomentForm::D: return e * oracle_detail::eta(w, k, t);
    }
    return 0.0;
  });
  return num / oracle_stratum_dr(truth, w, s);
}

inline double oracle_moment_expectation(const DiscreteDgp& g, const TargetIndex& t, MomentForm form) {
  return oracle_moment_expectation(g, g, t, form);
}

struct EifMeans {
  double psi = 0.0;
  double delta = 0.0;
};

// E[psi] and E[delta] under the truth with working nuisances w, optionally re-weighted by weights(k) over m.
inline EifMeans oracle_eif_means(const DiscreteDgp& truth, const DiscreteDgp& w, const TargetIndex& t,
                                 const std::function<std::vector<double>(std::size_t)>& weights = {}) {
  validate(truth);
  oracle_detail::check_target(truth, t);
  const Stratum s = t.stratum;
  const int z = t.z, dz = t.d_z(), zp = t.z_prime, dzp = t.d_z_prime();
  std::vector<std::vector<double>> wt(truth.points(), std::vector<double>(static_cast<std::size_t>(truth.levels()), 1.0));
  if (weights)
    for (std::size_t k = 0; k < truth.points(); ++k) wt[k] = weights(k);
  std::vector<double> eta_w(truth.points(), 0.0);
  for (std::size_t k = 0; k < truth.points(); ++k)
    for (int m = 0; m <= truth.m_max; ++m) eta_w[k] += wt[k][static_cast<std::size_t>(m)] * w.muv(k, z, dz, m) * w.rv(k, zp, dzp, m);
  EifMeans out;
  out.psi = population_mean(truth, [&](std::size_t k, int zz, int dd, int m, double y) {
    const double e = w.score(k, s);
    const double wm = wt[k][static_cast<std::size_t>(m)];
    double v = oracle_detail::augmentation(w, k, s, zz, dd) * eta_w[k] + e * eta_w[k];
    if (zz == z && dd == dz)
      v += e / (w.p(k, z, dz) * w.pi(k, z)) * w.rv(k, zp, dzp, m) / w.rv(k, z, dz, m) * wm * (y - w.muv(k, z, dz, m));
    if (zz == zp && dd == dzp) v += e / (w.p(k, zp, dzp) * w.pi(k, zp)) * (wm * w.muv(k, z, dz, m) - eta_w[k]);
    return v;
  });
  out.delta = population_mean(truth, [&](std::size_t k, int zz, int dd, int, double) {
    return oracle_detail::augmentation(w, k, s, zz, dd) + w.score(k, s);
  });
  return out;
}

// E[psi - theta delta] / e with all nuisances at the truth unless w is given.
inline double oracle_eif_mean(const DiscreteDgp& truth, const DiscreteDgp& w, const TargetIndex& t, double theta_input) {
  const EifMeans m = oracle_eif_means(truth, w, t);
  return (m.psi - theta_input * m.delta) / oracle_stratum_mass(truth, t.stratum);
}

inline double oracle_eif_mean(const DiscreteDgp& g, const TargetIndex& t, double theta_input) {
  return oracle_eif_mean(g, g, t, theta_input);
}

// Population limit of the multiply robust estimator.
inline double oracle_theta_mr(const DiscreteDgp& truth, const DiscreteDgp& w, const TargetIndex& t) {
  const EifMeans m = oracle_eif_means(truth, w, t);
  return m.psi / m.delta;
}

inline CellValues cell_values(const DiscreteDgp& w, std::size_t k) {
  CellValues c;
  c.mode = w.mode;
  c.p11 = w.p(k, 1, 1);
  c.p10 = w.p(k, 1, 0);
  c.p01 = w.mode == Monotonicity::Strong ? 0.0 : w.p(k, 0, 1);
  c.p00 = w.mode == Monotonicity::Strong ? 1.0 : w.p(k, 0, 0);
  c.r11 = w.r[k][static_cast<std::size_t>(cell_index(1, 1))];
  c.r00 = w.r[k][static_cast<std::size_t>(cell_index(0, 0))];
  return c;
}

inline double oracle_theta_mr_xi(const DiscreteDgp& truth, const DiscreteDgp& w, const XiSpec& spec, const TargetIndex& t) {
  const EifMeans m = oracle_eif_means(truth, w, t, [&](std::size_t k) { return sensitivity_weights(spec, cell_values(w, k), t); });
  return m.psi / m.delta;
}

inline double oracle_theta_mr_t(const DiscreteDgp& truth, const DiscreteDgp& w, const TSpec& spec, Stratum s) {
  const TargetIndex t{1, 0, s};
  const EifMeans m = oracle_eif_means(truth, w, t, [&](std::size_t k) {
    return rho_weights(spec, w.r[k][static_cast<std::size_t>(cell_index(1, s.d1))], w.r[k][static_cast<std::size_t>(cell_index(0, s.d0))]);
  });
  return m.psi / m.delta;
}

// ---------------------------------------------------------------------------
// Misspecified working nuisances: each helper distorts one model and leaves the rest true.

enum class Nuisance { Pi, P, R, Mu };

inline std::string to_string(Nuisance n) {
  switch (n) {
    case Nuisance::Pi: return "pi";
    case Nuisance::P: return "p";
    case Nuisance::R: return "r";
    case Nuisance::Mu: return "mu";
  }
  return "?";
}

inline double shift_logit(double p, double by) { return 1.0 / (1.0 + std::exp(-(std::log(p / (1.0 - p)) + by))); }

inline DiscreteDgp perturb(const DiscreteDgp& g, Nuisance which, double amount = 0.7) {
  DiscreteDgp w = g;
  for (std::size_t k = 0; k < g.points(); ++k) {
    const double by = amount * (1.0 + 0.5 * static_cast<double>(k));
    switch (which) {
      case Nuisance::Pi: w.pi1[k] = shift_logit(g.pi1[k], by); break;
      case Nuisance::P:
        // the same shift in both arms keeps the monotone ordering
        w.p1[k][1] = shift_logit(g.p1[k][1], -by);
        if (g.mode == Monotonicity::Standard) w.p1[k][0] = shift_logit(g.p1[k][0], -by);
        break;
      case Nuisance::R:
        for (auto& pmf : w.r[k]) {
          double s = 0.0;
          for (std::size_t m = 0; m < pmf.size(); ++m) {
            pmf[m] *= std::exp(by * static_cast<double>(m) / static_cast<double>(pmf.size()));
            s += pmf[m];
          }
          for (double& v : pmf) v /= s;
        }
        break;
      case Nuisance::Mu:
        for (auto& cell : w.mu[k])
          for (std::size_t m = 0; m < cell.size(); ++m) cell[m] += by * (1.0 + static_cast<double>(m)) - 0.3;
        break;
    }
  }
  return w;
}

inline DiscreteDgp perturb(const DiscreteDgp& g, std::initializer_list<Nuisance> which, double amount = 0.7) {
  DiscreteDgp w = g;
  for (Nuisance n : which) {
    const DiscreteDgp one = perturb(g, n, amount);
    switch (n) {
      case Nuisance::Pi: w.pi1 = one.pi1; break;
      case Nuisance::P: w.p1 = one.p1; break;
      case Nuisance::R: w.r = one.r; break;
      case Nuisance::Mu: w.mu = one.mu; break;
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Bridges to the sample-level library

inline std::size_t locate_point(const DiscreteDgp& g, Row x) {
  for (std::size_t k = 0; k < g.points(); ++k) {
    const auto& f = g.x_features[k];
    if (f.size() == x.size() && std::equal(f.begin(), f.end(), x.begin())) return k;
  }
  fail(ErrorKind::InvalidValue, "covariate row is not a support point");
}

inline DiscreteDgp with_default_features(DiscreteDgp g) {
  if (g.x_features.empty())
    for (std::size_t k = 0; k < g.points(); ++k) g.x_features.push_back({static_cast<double>(k)});
  return g;
}

inline NuisanceBundle bundle_from_dgp(const DiscreteDgp& g0) {
  const auto g = std::make_shared<DiscreteDgp>(with_default_features(g0));
  NuisanceBundle b;
  b.mediator = Mediator::categorical(g->m_max);
  b.monotonicity = g->mode;
  b.pi = [g](int z, Row x) { return g->pi(locate_point(*g, x), z); };
  b.p = [g](int z, int d, Row x) { return g->p(locate_point(*g, x), z, d); };
  b.r = [g](int z, int d, double m, Row x) { return g->rv(locate_point(*g, x), z, d, static_cast<int>(m)); };
  b.mu = [g](int z, int d, double m, Row x) { return g->muv(locate_point(*g, x), z, d, static_cast<int>(m)); };
  return b;
}

// Dataset whose empirical law is exactly the dgp: each cell repeated N * probability times, Y at its mean.
inline Dataset expand_population(const DiscreteDgp& g0, std::size_t N) {
  const DiscreteDgp g = with_default_features(g0);
  validate(g);
  Dataset d;
  d.p = g.x_features.front().size();
  d.mediator = Mediator::categorical(g.m_max);
  d.monotonicity = g.mode;
  for (std::size_t j = 0; j < d.p; ++j) d.covariate_names.push_back("x" + std::to_string(j + 1));
  for (std::size_t k = 0; k < g.points(); ++k)
    for (int z = 0; z < 2; ++z)
      for (int dd = 0; dd < 2; ++dd)
        for (int m = 0; m <= g.m_max; ++m) {
          const double c = static_cast<double>(N) * g.x_prob[k] * g.pi(k, z) * g.p(k, z, dd) * g.rv(k, z, dd, m);
          if (g.p(k, z, dd) == 0.0) continue;
          const double rc = std::round(c);
          if (std::abs(c - rc) > 1e-9) fail(ErrorKind::InvalidDgp, "cell count is not an integer for N=" + std::to_string(N));
          for (std::size_t rep = 0; rep < static_cast<std::size_t>(rc); ++rep) {
            d.x.insert(d.x.end(), g.x_features[k].begin(), g.x_features[k].end());
            d.z.push_back(z);
            d.d.push_back(dd);
            d.m.push_back(m);
            d.y.push_back(g.muv(k, z, dd, m));
          }
        }
  d.n = d.z.size();
  d.cells = tabulate_cells(d.z, d.d);
  return validate_dataset(std::move(d));
}

// ---------------------------------------------------------------------------
// Designs with known departures from the identifying assumptions

// Stratum-level law: scores e_u, mediator pmfs f_{M_z|u}, outcome means b(z, m, u) = E[Y_zm | U=u].
// Indexed [point][stratum index][m]. Mediator ignorability holds within strata.
struct XiViolationDgp {
  Monotonicity mode = Monotonicity::Standard;
  int m_max = 1;
  std::vector<double> x_prob, pi1;
  std::vector<std::array<double, 3>> e;
  std::vector<std::array<std::vector<double>, 3>> f1, f0, b1, b0;
};

// Rebuilds the complier pieces from the other strata so the design carries exactly the given violation.
inline XiViolationDgp apply_xi_violation(XiViolationDgp g, const XiSpec& spec) {
  const auto c = static_cast<std::size_t>(Stratum::compliers().index());
  const auto a = static_cast<std::size_t>(Stratum::always().index());
  const auto nv = static_cast<std::size_t>(Stratum::never().index());
  const bool strong = g.mode == Monotonicity::Strong;
  const auto L = static_cast<std::size_t>(g.m_max + 1);
  for (std::size_t k = 0; k < g.x_prob.size(); ++k) {
    auto tilt = [&](const std::vector<double>& base, double lambda) {
      std::vector<double> out(L);
      double s = 0.0;
      for (std::size_t m = 1; m < L; ++m) {
        out[m] = lambda * base[m];
        s += out[m];
      }
      out[0] = 1.0 - s;
      if (!(out[0] > 0.0)) fail(ErrorKind::InvalidDgp, "violation leaves a non-positive mediator pmf");
      return out;
    };
    if (!strong) {
      g.f1[k][c] = tilt(g.f1[k][a], spec.lambda_m1);
      for (std::size_t m = 0; m < L; ++m) g.b1[k][c][m] = spec.lambda_y1 * g.b1[k][a][m];
    }
    g.f0[k][c] = tilt(g.f0[k][nv], spec.lambda_m0);
    for (std::size_t m = 0; m < L; ++m) g.b0[k][c][m] = spec.lambda_y0 * g.b0[k][nv][m];
  }
  return g;
}

inline DiscreteDgp to_observed(const XiViolationDgp& g) {
  const auto c = static_cast<std::size_t>(Stratum::compliers().index());
  const auto a = static_cast<std::size_t>(Stratum::always().index());
  const auto nv = static_cast<std::size_t>(Stratum::never().index());
  const auto L = static_cast<std::size_t>(g.m_max + 1);
  DiscreteDgp o;
  o.mode = g.mode;
  o.m_max = g.m_max;
  o.x_prob = g.x_prob;
  o.pi1 = g.pi1;
  for (std::size_t k = 0; k < g.x_prob.size(); ++k) {
    const double ec = g.e[k][c], ea = g.mode == Monotonicity::Strong ? 0.0 : g.e[k][a], en = g.e[k][nv];
    o.p1.push_back({ea, ec + ea});
    std::array<std::vector<double>, 4> r, mu;
    for (auto& v : r) v.assign(L, 0.0);
    for (auto& v : mu) v.assign(L, 0.0);
    for (std::size_t m = 0; m < L; ++m) {
      // Z=1, D=1 mixes compliers and always-takers
      const double w1c = ec * g.f1[k][c][m], w1a = ea * g.f1[k][a][m];
      r[3][m] = (w1c + w1a) / (ec + ea);
      mu[3][m] = (w1c * g.b1[k][c][m] + w1a * g.b1[k][a][m]) / (w1c + w1a);
      r[2][m] = g.f1[k][nv][m];
      mu[2][m] = g.b1[k][nv][m];
      // Z=0, D=0 mixes compliers and never-takers
      const double w0c = ec * g.f0[k][c][m], w0n = en * g.f0[k][nv][m];
      r[0][m] = (w0c + w0n) / (ec + en);
      mu[0][m] = (w0c * g.b0[k][c][m] + w0n * g.b0[k][nv][m]) / (w0c + w0n);
      if (g.mode == Monotonicity::Standard) {
        r[1][m] = g.f0[k][a][m];
        mu[1][m] = g.b0[k][a][m];
      } else {
        r[1][m] = 1.0 / static_cast<double>(L);
      }
    }
    o.r.push_back(r);
    o.mu.push_back(mu);
  }
  validate(o);
  return o;
}

inline double violation_truth(const XiViolationDgp& g, const TargetIndex& t) {
  if (!admissible(t.stratum, g.mode)) fail(ErrorKind::UnsupportedTarget, "stratum not admissible");
  const auto si = static_cast<std::size_t>(t.stratum.index());
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.x_prob.size(); ++k) {
    const auto& f = t.z_prime == 1 ? g.f1[k][si] : g.f0[k][si];
    const auto& b = t.z == 1 ? g.b1[k][si] : g.b0[k][si];
    double s = 0.0;
    for (std::size_t m = 0; m < f.size(); ++m) s += b[m] * f[m];
    num += g.x_prob[k] * g.e[k][si] * s;
    den += g.x_prob[k] * g.e[k][si];
  }
  return num / den;
}

// Mediator-outcome confounding within strata through t(z, m). Observed pmfs q[point][2z+d][m],
// a1[point][d1][m] = E[Y_1m | U with that d1], t[z][m] with t[z][0] = 1, b0 = observed mu under Z=0.
struct TViolationDgp {
  Monotonicity mode = Monotonicity::Standard;
  int m_max = 1;
  std::vector<double> x_prob, pi1;
  std::vector<std::array<double, 2>> p1;
  std::vector<std::array<std::vector<double>, 4>> q;
  std::vector<std::array<std::vector<double>, 2>> a1;
  std::vector<std::array<std::vector<double>, 2>> b0;
  std::array<std::vector<double>, 2> t;

  static std::array<std::vector<double>, 2> from_zeta(const TSpec& s, int m_max) {
    std::vector<double> v(static_cast<std::size_t>(m_max + 1), s.zeta);
    v[0] = 1.0;
    return {v, v};
  }
  double total(std::size_t k, int z, int d) const {
    double s = 0.0;
    const auto& pmf = q[k][static_cast<std::size_t>(cell_index(z, d))];
    for (std::size_t i = 0; i < pmf.size(); ++i) s += t[static_cast<std::size_t>(z)][i] * pmf[i];
    return s;
  }
};

inline DiscreteDgp to_observed(const TViolationDgp& g) {
  DiscreteDgp o;
  o.mode = g.mode;
  o.m_max = g.m_max;
  o.x_prob = g.x_prob;
  o.pi1 = g.pi1;
  o.p1 = g.p1;
  o.r = g.q;
  for (std::size_t k = 0; k < g.x_prob.size(); ++k) {
    std::array<std::vector<double>, 4> mu;
    for (int d = 0; d < 2; ++d) {
      const double T1 = g.total(k, 1, d);
      auto& cell = mu[static_cast<std::size_t>(cell_index(1, d))];
      for (int m = 0; m <= g.m_max; ++m)
        cell.push_back(g.a1[k][static_cast<std::size_t>(d)][static_cast<std::size_t>(m)] * g.t[1][static_cast<std::size_t>(m)] / T1);
      mu[static_cast<std::size_t>(cell_index(0, d))] = g.b0[k][static_cast<std::size_t>(d)];
    }
    o.mu.push_back(mu);
  }
  validate(o);
  return o;
}

inline double violation_truth(const TViolationDgp& g, Stratum s) {
  const DiscreteDgp o = to_observed(g);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < g.x_prob.size(); ++k) {
    const double e = o.score(k, s);
    const double T0 = g.total(k, 0, s.d0);
    const auto& pmf = g.q[k][static_cast<std::size_t>(cell_index(0, s.d0))];
    double v = 0.0;
    for (int m = 0; m <= g.m_max; ++m) {
      const auto mi = static_cast<std::size_t>(m);
      v += pmf[mi] * g.a1[k][static_cast<std::size_t>(s.d1)][mi] * g.t[0][mi] / T0;
    }
    num += g.x_prob[k] * e * v;
    den += g.x_prob[k] * e;
  }
  return num / den;
}

inline double oracle_sensitivity_truth(const XiViolationDgp& g, const TargetIndex& t) { return violation_truth(g, t); }
inline double oracle_sensitivity_truth(const TViolationDgp& g, Stratum s) { return violation_truth(g, s); }

// Built-in designs: three covariate points, three mediator levels.
inline XiViolationDgp reference_xi_design(Monotonicity mode, const XiSpec& spec) {
  XiViolationDgp g;
  g.mode = mode;
  g.m_max = 2;
  g.x_prob = {0.3, 0.45, 0.25};
  g.pi1 = {0.4, 0.55, 0.7};
  for (std::size_t k = 0; k < 3; ++k) {
    const double kk = static_cast<double>(k);
    if (mode == Monotonicity::Standard) g.e.push_back({0.35 + 0.05 * kk, 0.25 - 0.05 * kk, 0.4});
    else g.e.push_back({0.55 + 0.1 * kk, 0.0, 0.45 - 0.1 * kk});
    std::array<std::vector<double>, 3> f1, f0, b1, b0;
    // pmfs for always-takers/never-takers sit low so tilts keep level 0 positive
    f1[1] = {0.5 - 0.05 * kk, 0.3, 0.2 + 0.05 * kk};
    f1[2] = {0.45, 0.35 - 0.05 * kk, 0.2 + 0.05 * kk};
    f0[1] = {0.3 + 0.05 * kk, 0.4, 0.3 - 0.05 * kk};
    f0[2] = {0.55, 0.25, 0.2};
    f1[0] = f1[1];
    f0[0] = f0[2];
    for (std::size_t u = 0; u < 3; ++u) {
      const double uu = static_cast<double>(u);
      b1[u] = {2.0 + 0.3 * kk + 0.2 * uu, 2.6 + 0.2 * kk + 0.1 * uu, 3.1 - 0.1 * kk + 0.15 * uu};
      b0[u] = {1.2 + 0.25 * kk + 0.1 * uu, 1.7 - 0.1 * kk + 0.2 * uu, 1.9 + 0.2 * kk - 0.05 * uu};
    }
    g.f1.push_back(f1);
    g.f0.push_back(f0);
    g.b1.push_back(b1);
    g.b0.push_back(b0);
  }
  return apply_xi_violation(g, spec);
}

inline TViolationDgp reference_t_design(Monotonicity mode, const TSpec& spec) {
  TViolationDgp g;
  g.mode = mode;
  g.m_max = 2;
  g.x_prob = {0.3, 0.45, 0.25};
  g.pi1 = {0.4, 0.55, 0.7};
  g.t = TViolationDgp::from_zeta(spec, g.m_max);
  for (std::size_t k = 0; k < 3; ++k) {
    const double kk = static_cast<double>(k);
    if (mode == Monotonicity::Standard) g.p1.push_back({0.2 + 0.05 * kk, 0.65 + 0.05 * kk});
    else g.p1.push_back({0.0, 0.6 + 0.1 * kk});
    std::array<std::vector<double>, 4> q;
    q[0] = {0.5 - 0.05 * kk, 0.3, 0.2 + 0.05 * kk};
    q[1] = {0.4, 0.35, 0.25};
    q[2] = {0.35, 0.4 - 0.05 * kk, 0.25 + 0.05 * kk};
    q[3] = {0.25 + 0.05 * kk, 0.35, 0.4 - 0.05 * kk};
    g.q.push_back(q);
    g.a1.push_back({std::vector<double>{2.0 + 0.2 * kk, 2.4, 2.9 - 0.1 * kk}, std::vector<double>{2.5, 3.0 + 0.1 * kk, 3.6}});
    g.b0.push_back({std::vector<double>{1.1 + 0.1 * kk, 1.5, 1.8}, std::vector<double>{1.4, 1.6 - 0.1 * kk, 2.2}});
  }
  return g;
}

// ---------------------------------------------------------------------------
// Certification

struct GoldenValue {
  TargetIndex target{};
  double value = 0.0;
};

struct CertCheck {
  std::string name;
  double discrepancy = 0.0;  // max absolute
  double tolerance = 0.0;
  bool pass() const { return discrepancy <= tolerance; }
};

inline std::vector<TargetIndex> effect_targets(Monotonicity mode) {
  std::vector<TargetIndex> out;
  for (Stratum s : strata_for_mode(mode))
    for (const auto& pr : kEffectPairs) out.push_back({pr[0], pr[1], s});
  return out;
}

inline std::vector<CertCheck> certify(const DiscreteDgp& g, const std::vector<GoldenValue>& golden = {}) {
  validate(g);
  std::vector<CertCheck> out;
  auto add = [&](const std::string& name, double tol, const std::function<double()>& worst) { out.push_back({name, std::abs(worst()), tol}); };
  const auto targets = effect_targets(g.mode);
  auto over_targets = [&](const std::function<double(const TargetIndex&)>& f) {
    double m = 0.0;
    for (const auto& t : targets) m = std::max(m, std::abs(f(t)));
    return m;
  };

  add("moment_forms_equal_truth", 1e-10, [&] {
    return over_targets([&](const TargetIndex& t) {
      const double th = oracle_theta(g, t);
      double m = 0.0;
      for (MomentForm f : {MomentForm::A, MomentForm::B, MomentForm::C, MomentForm::D})
        m = std::max(m, std::abs(oracle_moment_expectation(g, t, f) - th));
      return m;
    });
  });
  add("eif_mean_zero_at_truth", 1e-10, [&] { return over_targets([&](const TargetIndex& t) { return oracle_eif_mean(g, t, oracle_theta(g, t)); }); });
  add("eif_mean_unit_shift", 1e-10, [&] {
    return over_targets([&](const TargetIndex& t) { return oracle_eif_mean(g, t, oracle_theta(g, t) + 1.0) + 1.0; });
  });
  add("delta_mean_equals_score", 1e-12, [&] {
    return over_targets([&](const TargetIndex& t) { return oracle_eif_means(g, g, t).delta - oracle_stratum_mass(g, t.stratum); });
  });
  for (Nuisance wrong : {Nuisance::Pi, Nuisance::P}) {
    add("cell_probability_dr_wrong_" + to_string(wrong), 1e-10, [&] {
      const DiscreteDgp w = perturb(g, wrong);
      double m = 0.0;
      for (int z = 0; z < 2; ++z)
        for (int d = 0; d < 2; ++d) {
          if (g.mode == Monotonicity::Strong && z == 0) continue;
          // the doubly robust form targets E[p_zd(X)]
          double target = 0.0;
          for (std::size_t k = 0; k < g.points(); ++k) target += g.x_prob[k] * g.p(k, z, d);
          m = std::max(m, std::abs(oracle_p_dr(g, w, z, d) - target));
        }
      return m;
    });
  }
  for (Nuisance wrong : {Nuisance::Mu, Nuisance::R, Nuisance::P, Nuisance::Pi}) {
    add("multiply_robust_wrong_" + to_string(wrong), 1e-10, [&] {
      const DiscreteDgp w = perturb(g, wrong);
      return over_targets([&](const TargetIndex& t) { return oracle_theta_mr(g, w, t) - oracle_theta(g, t); });
    });
  }
  add("sensitivity_identity_xi", 1e-12, [&] {
    XiSpec id;
    id.mode = g.mode;
    return over_targets([&](const TargetIndex& t) { return oracle_theta_mr_xi(g, g, id, t) - oracle_theta_mr(g, g, t); });
  });
  add("sensitivity_identity_t", 1e-12, [&] {
    double m = 0.0;
    for (Stratum s : strata_for_mode(g.mode))
      m = std::max(m, std::abs(oracle_theta_mr_t(g, g, TSpec{1.0}, s) - oracle_theta_mr(g, g, {1, 0, s})));
    return m;
  });
  for (Monotonicity mode : {Monotonicity::Standard, Monotonicity::Strong}) {
    const std::string tag = mode == Monotonicity::Standard ? "standard" : "strong";
    XiSpec spec{1.3, 0.8, 1.15, 0.9, mode};
    add("xi_violation_recovered_" + tag, 1e-10, [&, spec] {
      const XiViolationDgp v = reference_xi_design(mode, spec);
      const DiscreteDgp o = to_observed(v);
      double m = 0.0;
      for (const auto& t : effect_targets(mode)) {
        const double truth = oracle_sensitivity_truth(v, t);
        m = std::max(m, std::abs(oracle_theta_mr_xi(o, o, spec, t) - truth));
        // double robustness: correct p and r with wrong mu, or wrong pi with the rest correct
        m = std::max(m, std::abs(oracle_theta_mr_xi(o, perturb(o, Nuisance::Mu), spec, t) - truth));
        m = std::max(m, std::abs(oracle_theta_mr_xi(o, perturb(o, Nuisance::Pi), spec, t) - truth));
      }
      return m;
    });
    add("t_violation_recovered_" + tag, 1e-10, [&] {
      const TSpec ts{1.6};
      const TViolationDgp v = reference_t_design(mode, ts);
      const DiscreteDgp o = to_observed(v);
      double m = 0.0;
      for (Stratum s : strata_for_mode(mode)) {
        const double truth = oracle_sensitivity_truth(v, s);
        m = std::max(m, std::abs(oracle_theta_mr_t(o, o, ts, s) - truth));
        for (Nuisance wrong : {Nuisance::Mu, Nuisance::Pi, Nuisance::P})
          m = std::max(m, std::abs(oracle_theta_mr_t(o, perturb(o, wrong), ts, s) - truth));
      }
      return m;
    });
  }
  for (const auto& gv : golden) {
    const std::string name = "golden_theta" + gv.target.stratum.label() + "_" + std::to_string(gv.target.z) + std::to_string(gv.target.z_prime);
    add(name, 1e-12, [&] { return oracle_theta(g, gv.target) - gv.value; });
  }
  return out;
}

}  // namespace psmed
