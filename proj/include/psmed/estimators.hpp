#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "psmed/nuisance.hpp"

namespace psmed {

enum class MomentForm { A, B, C, D };

inline std::string to_string(MomentForm f) {
  switch (f) {
    case MomentForm::A: return "a";
    case MomentForm::B: return "b";
    case MomentForm::C: return "c";
    case MomentForm::D: return "d";
  }
  return "?";
}

struct EifComponents {
  std::vector<double> psi;
  std::vector<double> delta;
  TargetIndex target{};
};

namespace detail {

inline void require_target(const UnitNuisances& u, const TargetIndex& t) {
  if (t.z == 0 && t.z_prime == 1) fail(ErrorKind::UnsupportedTarget, "pair (0,1) does not enter any effect");
  u.require_stratum(t.stratum);
}

inline double positive_denominator(double den, Stratum s) {
  if (!(den > 0.0) || !std::isfinite(den))
    fail(ErrorKind::EmptyStratumEstimate, "estimated proportion of stratum " + s.label() + " is " + std::to_string(den));
  return den;
}

inline double indicator(bool b) { return b ? 1.0 : 0.0; }

// Augmentation of the stratum indicator: I(Z=z*){I(D=d*) - p_{z*d*}}/pi_{z*} - k(1-Z){D - p01}/pi_0.
inline double stratum_augmentation(const Dataset& data, const UnitNuisances& u, Stratum s, std::size_t i) {
  const int zs = s.z_star(), ds = s.d_star();
  double a = 0.0;
  if (data.z[i] == zs) a += (indicator(data.d[i] == ds) - u.p_raw(zs, ds, i)) / u.pi_den(zs, i);
  if (s.k() && data.z[i] == 0) a -= (data.d[i] - u.p_raw(0, 1, i)) / u.pi_den(0, i);
  return a;
}

inline double density_ratio(const UnitNuisances& u, int cell_num, int cell_den, std::size_t i) {
  const double v = u.r_obs[static_cast<std::size_t>(cell_num)][i] / u.r_den(cell_den, i);
  if (!(v <= u.clip.max_density_ratio))
    fail(ErrorKind::DensityRatioOverflow, "mediator density ratio " + std::to_string(v) + " at unit " + std::to_string(i));
  return v;
}

}  // namespace detail

inline double theta_moment(const Dataset& data, const UnitNuisances& u, const TargetIndex& t, MomentForm form) {
  detail::require_target(u, t);
  const Stratum s = t.stratum;
  const int z = t.z, dz = t.d_z(), zp = t.z_prime, dzp = t.d_z_prime();
  const int cz = cell_index(z, dz), czp = cell_index(zp, dzp);
  const int zs = s.z_star(), ds = s.d_star(), k = s.k();
  double acc = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const double e = u.e(s, i);
    switch (form) {
      case MomentForm::A:
        if (data.z[i] == z && data.d[i] == dz)
          acc += e / (u.p_den(z, dz, i) * u.pi_den(z, i)) * detail::density_ratio(u, czp, cz, i) * data.y[i];
        break;
      case MomentForm::B: {
        double w = 0.0;
        if (data.z[i] == zs && data.d[i] == ds) w += 1.0 / u.pi_den(zs, i);
        if (k && data.z[i] == 0 && data.d[i] == 1) w -= 1.0 / u.pi_den(0, i);
        acc += w * u.eta_at(cz, czp, i);
        break;
      }
      case MomentForm::C:
        if (data.z[i] == zp && data.d[i] == dzp) acc += e / (u.p_den(zp, dzp, i) * u.pi_den(zp, i)) * u.mu_obs[static_cast<std::size_t>(cz)][i];
        break;
      case MomentForm::D:
        acc += e * u.eta_at(cz, czp, i);
        break;
    }
  }
  const double den = detail::positive_denominator(stratum_proportion_dr(data, u, s), s);
  return acc / static_cast<double>(data.n) / den;
}

inline EifComponents eif_components(const Dataset& data, const UnitNuisances& u, const TargetIndex& t) {
  detail::require_target(u, t);
  const Stratum s = t.stratum;
  const int z = t.z, dz = t.d_z(), zp = t.z_prime, dzp = t.d_z_prime();
  const int cz = cell_index(z, dz), czp = cell_index(zp, dzp);
  EifComponents out;
  out.target = t;
  out.psi.resize(data.n);
  out.delta.resize(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    const double a = detail::stratum_augmentation(data, u, s, i);
    const double e = u.e(s, i);
    const double et = u.eta_at(cz, czp, i);
    const double mu_obs = u.mu_obs[static_cast<std::size_t>(cz)][i];
    double psi = a * et + e * et;
    if (data.z[i] == z && data.d[i] == dz)
      psi += e / (u.p_den(z, dz, i) * u.pi_den(z, i)) * detail::density_ratio(u, czp, cz, i) * (data.y[i] - mu_obs);
    if (data.z[i] == zp && data.d[i] == dzp) psi += e / (u.p_den(zp, dzp, i) * u.pi_den(zp, i)) * (mu_obs - et);
    out.psi[i] = psi;
    out.delta[i] = a + e;
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct MrEstimate {
  double theta = 0.0;
  double psi_mean = 0.0;
  double delta_mean = 0.0;
};

inline MrEstimate mr_ratio(const EifComponents& c) {
  MrEstimate m;
  m.psi_mean = mean_of(c.psi);
  m.delta_mean = detail::positive_denominator(mean_of(c.delta), c.target.stratum);
  m.theta = m.psi_mean / m.delta_mean;
  return m;
}

inline double theta_mr(const Dataset& data, const UnitNuisances& u, const TargetIndex& t) {
  return mr_ratio(eif_components(data, u, t)).theta;
}

inline double theta_moment(const Dataset& data, const NuisanceBundle& b, const TargetIndex& t, MomentForm form,
                           const ClipPolicy& clip = {}) {
  return theta_moment(data, evaluate_nuisances(data, b, clip), t, form);
}
inline EifComponents eif_components(const Dataset& data, const NuisanceBundle& b, const TargetIndex& t, const ClipPolicy& clip = {}) {
  return eif_components(data, evaluate_nuisances(data, b, clip), t);
}
inline double theta_mr(const Dataset& data, const NuisanceBundle& b, const TargetIndex& t, const ClipPolicy& clip = {}) {
  return theta_mr(data, evaluate_nuisances(data, b, clip), t);
}

// ---------------------------------------------------------------------------
// Effect assembly

enum class Method { A, B, C, D, MR, NP };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::A: return "a";
    case Method::B: return "b";
    case Method::C: return "c";
    case Method::D: return "d";
    case Method::MR: return "mr";
    case Method::NP: return "np";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "a") return Method::A;
  if (s == "b") return Method::B;
  if (s == "c") return Method::C;
  if (s == "d") return Method::D;
  if (s == "mr") return Method::MR;
  if (s == "np") return Method::NP;
  fail(ErrorKind::ConfigError, "unknown method '" + s + "'");
}

inline MomentForm form_of(Method m) {
  switch (m) {
    case Method::A: return MomentForm::A;
    case Method::B: return MomentForm::B;
    case Method::C: return MomentForm::C;
    case Method::D: return MomentForm::D;
    default: fail(ErrorKind::ConfigError, "not a moment method");
  }
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct ThetaTable {
  Monotonicity monotonicity = Monotonicity::Standard;
  // [stratum index][pair index 11, 10, 00]
  std::array<std::array<double, 3>, 3> theta{{{kNaN, kNaN, kNaN}, {kNaN, kNaN, kNaN}, {kNaN, kNaN, kNaN}}};
  std::array<double, 3> e{kNaN, kNaN, kNaN};
  // P_n[psi] for the mr and np paths; ITT effects then use summed psi differences
  bool has_psi_means = false;
  std::array<std::array<double, 3>, 3> psi_mean{};

  double get(Stratum s, int pair) const { return theta[static_cast<std::size_t>(s.index())][static_cast<std::size_t>(pair)]; }
};

inline ThetaTable theta_table(const Dataset& data, const UnitNuisances& u, Method method) {
  ThetaTable tab;
  tab.monotonicity = data.monotonicity;
  tab.has_psi_means = method == Method::MR || method == Method::NP;
  for (Stratum s : strata_for_mode(data.monotonicity)) {
    const auto si = static_cast<std::size_t>(s.index());
    tab.e[si] = detail::positive_denominator(stratum_proportion_dr(data, u, s), s);
    for (std::size_t k = 0; k < 3; ++k) {
      const TargetIndex t{kEffectPairs[k][0], kEffectPairs[k][1], s};
      if (tab.has_psi_means) {
        const MrEstimate m = mr_ratio(eif_components(data, u, t));
        tab.theta[si][k] = m.theta;
        tab.psi_mean[si][k] = m.psi_mean;
      } else {
        tab.theta[si][k] = theta_moment(data, u, t, form_of(method));
      }
    }
  }
  return tab;
}

enum class Scale { Difference, RiskRatio };

struct StratumEffects {
  Stratum stratum{};
  double pnie = 0, pnde = 0, pce = 0;           // difference scale, or ratios on the risk-ratio scale
  double log_pnie = 0, log_pnde = 0, log_pce = 0;  // risk-ratio scale only
};

struct EffectSet {
  Scale scale = Scale::Difference;
  std::vector<StratumEffects> strata;
  double itt_nie = 0, itt_nde = 0, itt = 0;
  double log_itt_nie = 0, log_itt_nde = 0, log_itt = 0;

  // Named values in a fixed order, used for reporting and resampling.
  std::vector<std::pair<std::string, double>> flatten() const {
    const std::string sfx = scale == Scale::RiskRatio ? "_RR" : "";
    std::vector<std::pair<std::string, double>> out;
    for (const auto& s : strata) {
      out.emplace_back("PNIE_" + s.stratum.label() + sfx, s.pnie);
      out.emplace_back("PNDE_" + s.stratum.label() + sfx, s.pnde);
      out.emplace_back("PCE_" + s.stratum.label() + sfx, s.pce);
    }
    out.emplace_back("ITT_NIE" + sfx, itt_nie);
    out.emplace_back("ITT_NDE" + sfx, itt_nde);
    out.emplace_back("ITT" + sfx, itt);
    return out;
  }
};

inline EffectSet assemble_effects(const ThetaTable& tab, Scale scale) {
  EffectSet out;
  out.scale = scale;
  // E[Y_{z M_z'}] over the population, per pair
  std::array<double, 3> marginal{0, 0, 0};
  for (Stratum s : strata_for_mode(tab.monotonicity)) {
    const auto si = static_cast<std::size_t>(s.index());
    for (std::size_t k = 0; k < 3; ++k) {
      if (std::isnan(tab.theta[si][k])) fail(ErrorKind::InvalidValue, "theta table incomplete for stratum " + s.label());
      marginal[k] += tab.has_psi_means ? tab.psi_mean[si][k] : tab.e[si] * tab.theta[si][k];
    }
  }
  for (Stratum s : strata_for_mode(tab.monotonicity)) {
    const double t11 = tab.get(s, 0), t10 = tab.get(s, 1), t00 = tab.get(s, 2);
    StratumEffects se;
    se.stratum = s;
    if (scale == Scale::Difference) {
      se.pnie = t11 - t10;
      se.pnde = t10 - t00;
      se.pce = se.pnie + se.pnde;
    } else {
      for (double v : {t11, t10, t00})
        if (!(v > 0.0)) fail(ErrorKind::DivisionByZero, "risk ratio needs positive theta; stratum " + s.label() + " has " + std::to_string(v));
      se.log_pnie = std::log(t11) - std::log(t10);
      se.log_pnde = std::log(t10) - std::log(t00);
      se.log_pce = se.log_pnie + se.log_pnde;
      se.pnie = std::exp(se.log_pnie);
      se.pnde = std::exp(se.log_pnde);
      se.pce = std::exp(se.log_pce);
    }
    out.strata.push_back(se);
  }
  if (scale == Scale::Difference) {
    out.itt_nie = marginal[0] - marginal[1];
    out.itt_nde = marginal[1] - marginal[2];
    out.itt = out.itt_nie + out.itt_nde;
  } else {
    for (double v : marginal)
      if (!(v > 0.0)) fail(ErrorKind::DivisionByZero, "risk ratio needs positive marginal means");
    out.log_itt_nie = std::log(marginal[0]) - std::log(marginal[1]);
    out.log_itt_nde = std::log(marginal[1]) - std::log(marginal[2]);
    out.log_itt = out.log_itt_nie + out.log_itt_nde;
    out.itt_nie = std::exp(out.log_itt_nie);
    out.itt_nde = std::exp(out.log_itt_nde);
    out.itt = std::exp(out.log_itt);
  }
  return out;
}

}  // namespace psmed
