#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "psmed/analysis.hpp"
#include "psmed/estimators.hpp"
#include "psmed/nuisance.hpp"

namespace psmed {

struct XiSpec {
  double lambda_m1 = 1.0;
  double lambda_m0 = 1.0;
  double lambda_y1 = 1.0;
  double lambda_y0 = 1.0;
  Monotonicity mode = Monotonicity::Standard;
};

struct TSpec {
  double zeta = 1.0;
};

// Confounding functions by mediator level. m1/m0 hold mediator ratios for m >= 1 (entry 0 unused),
// y1/y0 hold outcome-mean ratios for every m.
struct XiFunctions {
  std::vector<double> m1, m0, y1, y0;
  Monotonicity mode = Monotonicity::Standard;
};

inline XiFunctions expand(const XiSpec& s, int levels) {
  for (double v : {s.lambda_m1, s.lambda_m0, s.lambda_y1, s.lambda_y0})
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorKind::ConfigError, "sensitivity parameters must be positive");
  XiFunctions f;
  f.mode = s.mode;
  const bool strong = s.mode == Monotonicity::Strong;
  const auto L = static_cast<std::size_t>(levels);
  f.m1.assign(L, strong ? 1.0 : s.lambda_m1);
  f.m0.assign(L, s.lambda_m0);
  f.y1.assign(L, strong ? 1.0 : s.lambda_y1);
  f.y0.assign(L, s.lambda_y0);
  return f;
}

// Observed-law quantities at one covariate value.
struct CellValues {
  double p11 = 0, p01 = 0, p10 = 0, p00 = 0;
  std::vector<double> r11, r00;  // pmfs over 0..m_max
  Monotonicity mode = Monotonicity::Standard;
};

inline CellValues cell_values(const NuisanceBundle& b, Row x) {
  if (!b.mediator.discrete()) fail(ErrorKind::UnsupportedMediator, "sensitivity analysis needs a discrete mediator");
  CellValues c;
  c.mode = b.monotonicity;
  c.p11 = b.p(1, 1, x);
  c.p10 = b.p(1, 0, x);
  c.p01 = c.mode == Monotonicity::Strong ? 0.0 : b.p(0, 1, x);
  c.p00 = c.mode == Monotonicity::Strong ? 1.0 : b.p(0, 0, x);
  for (int m = 0; m <= b.mediator.m_max; ++m) {
    c.r11.push_back(b.r(1, 1, m, x));
    c.r00.push_back(b.r(0, 0, m, x));
  }
  return c;
}

inline CellValues cell_values(const UnitNuisances& u, std::size_t i) {
  CellValues c;
  c.mode = u.monotonicity;
  c.p11 = u.p_raw(1, 1, i);
  c.p10 = u.p_raw(1, 0, i);
  c.p01 = c.mode == Monotonicity::Strong ? 0.0 : u.p_raw(0, 1, i);
  c.p00 = c.mode == Monotonicity::Strong ? 1.0 : u.p_raw(0, 0, i);
  for (int m = 0; m < u.levels; ++m) {
    c.r11.push_back(u.r_at(i, cell_index(1, 1), m));
    c.r00.push_back(u.r_at(i, cell_index(0, 0), m));
  }
  return c;
}

// Ratios of stratum-specific mediator pmfs and outcome means to their observed counterparts.
struct XiFactors {
  std::vector<double> med_c1, med_a1, med_c0, med_n0;  // f_{M1|10}/r11, f_{M1|11}/r11, f_{M0|10}/r00, f_{M0|00}/r00
  std::vector<double> out_c1, out_a1, out_c0, out_n0;  // E[Y1m|10]/mu11, E[Y1m|11]/mu11, E[Y0m|10]/mu00, E[Y0m|00]/mu00
  double xi_m1_zero = 1.0, xi_m0_zero = 1.0;
};

inline XiFactors xi_factors(const XiFunctions& f, const CellValues& c, const std::string& where = "") {
  const std::size_t L = c.r11.size();
  const double gap = c.p11 - c.p01;
  const bool strong = c.mode == Monotonicity::Strong;
  XiFactors out;
  out.med_c1.assign(L, 1.0);
  out.med_a1.assign(L, 1.0);
  out.med_c0.assign(L, 1.0);
  out.med_n0.assign(L, 1.0);
  double sc1 = 0, sa1 = 0, sc0 = 0, sn0 = 0;
  for (std::size_t m = 1; m < L; ++m) {
    const double d1 = f.m1[m] * gap + c.p01;
    const double d0 = f.m0[m] * gap + c.p10;
    out.med_c1[m] = f.m1[m] * c.p11 / d1;
    out.med_a1[m] = c.p11 / d1;
    out.med_c0[m] = f.m0[m] * c.p00 / d0;
    out.med_n0[m] = c.p00 / d0;
    sc1 += out.med_c1[m] * c.r11[m];
    sa1 += out.med_a1[m] * c.r11[m];
    sc0 += out.med_c0[m] * c.r00[m];
    sn0 += out.med_n0[m] * c.r00[m];
  }
  auto check = [&](double v, const char* what) {
    if (!(v > 0.0))
      fail(ErrorKind::ImpliedNegativePmf, std::string(what) + " at level 0 is " + std::to_string(v) + where);
  };
  check(1 - sc0, "implied mediator pmf of stratum 10 under control");
  check(1 - sn0, "implied mediator pmf of stratum 00 under control");
  if (!strong) {
    check(1 - sc1, "implied mediator pmf of stratum 10 under treatment");
    check(1 - sa1, "implied mediator pmf of stratum 11 under treatment");
    out.xi_m1_zero = (1 - sc1) / (1 - sa1);
    out.med_c1[0] = (1 - sc1) / c.r11[0];
    out.med_a1[0] = (1 - sa1) / c.r11[0];
  }
  out.xi_m0_zero = (1 - sc0) / (1 - sn0);
  out.med_c0[0] = (1 - sc0) / c.r00[0];
  out.med_n0[0] = (1 - sn0) / c.r00[0];

  out.out_c1.assign(L, 1.0);
  out.out_a1.assign(L, 1.0);
  out.out_c0.assign(L, 1.0);
  out.out_n0.assign(L, 1.0);
  for (std::size_t m = 0; m < L; ++m) {
    const double x1 = m == 0 ? out.xi_m1_zero : f.m1[m];
    const double x0 = m == 0 ? out.xi_m0_zero : f.m0[m];
    if (!strong) {
      out.out_c1[m] = (x1 * gap + c.p01) / (c.p01 / f.y1[m] + x1 * gap);
      out.out_a1[m] = (x1 * gap + c.p01) / (c.p01 + f.y1[m] * x1 * gap);
    }
    out.out_c0[m] = (x0 * gap + c.p10) / (c.p10 / f.y0[m] + x0 * gap);
    out.out_n0[m] = (x0 * gap + c.p10) / (c.p10 + f.y0[m] * x0 * gap);
  }
  return out;
}

inline std::pair<double, double> xi_zero_level(const XiSpec& spec, const NuisanceBundle& b, Row x) {
  const CellValues c = cell_values(b, x);
  const XiFactors f = xi_factors(expand(spec, static_cast<int>(c.r11.size())), c);
  return {f.xi_m1_zero, f.xi_m0_zero};
}

namespace detail {

inline void require_xi_target(const TargetIndex& t, Monotonicity mode) {
  if (t.z == 0 && t.z_prime == 1) fail(ErrorKind::UnsupportedTarget, "sensitivity weights are not defined for pair (0,1)");
  if (!admissible(t.stratum, mode)) fail(ErrorKind::UnsupportedTarget, "stratum " + t.stratum.label() + " not admissible");
}

// w = (mediator factor for M_{z'} in the stratum) x (outcome factor for Y_{zm} in the stratum)
inline std::vector<double> xi_weights(const XiFactors& f, const TargetIndex& t) {
  const Stratum s = t.stratum;
  const std::size_t L = f.med_c1.size();
  std::vector<double> w(L, 1.0);
  for (std::size_t m = 0; m < L; ++m) {
    double med = 1.0, out = 1.0;
    if (t.z_prime == 1) med = s == Stratum::compliers() ? f.med_c1[m] : (s == Stratum::always() ? f.med_a1[m] : 1.0);
    else med = s == Stratum::compliers() ? f.med_c0[m] : (s == Stratum::never() ? f.med_n0[m] : 1.0);
    if (t.z == 1) out = s == Stratum::compliers() ? f.out_c1[m] : (s == Stratum::always() ? f.out_a1[m] : 1.0);
    else out = s == Stratum::compliers() ? f.out_c0[m] : (s == Stratum::never() ? f.out_n0[m] : 1.0);
    w[m] = med * out;
  }
  return w;
}

}  // namespace detail

inline std::vector<double> sensitivity_weights(const XiSpec& spec, const CellValues& c, const TargetIndex& t) {
  detail::require_xi_target(t, c.mode);
  return detail::xi_weights(xi_factors(expand(spec, static_cast<int>(c.r11.size())), c), t);
}

inline double sensitivity_weight_pi(const XiSpec& spec, const NuisanceBundle& b, Stratum s, std::pair<int, int> target, int m, Row x) {
  const TargetIndex t{target.first, target.second, s};
  detail::require_xi_target(t, b.monotonicity);
  return sensitivity_weights(spec, cell_values(b, x), t).at(static_cast<std::size_t>(m));
}

namespace detail {

// Shared four-term re-weighted estimator; weights(i) gives the per-level weights of unit i.
template <class WeightFn>
double reweighted_mr(const Dataset& data, const UnitNuisances& u, const TargetIndex& t, WeightFn&& weights) {
  detail::require_target(u, t);
  const Stratum s = t.stratum;
  const int z = t.z, dz = t.d_z(), zp = t.z_prime, dzp = t.d_z_prime();
  const int cz = cell_index(z, dz), czp = cell_index(zp, dzp);
  double acc = 0.0;
  for (std::size_t i = 0; i < data.n; ++i) {
    const std::vector<double> w = weights(i);
    double eta_w = 0.0;
    for (int m = 0; m < u.levels; ++m) eta_w += w[static_cast<std::size_t>(m)] * u.mu_at(i, cz, m) * u.r_at(i, czp, m);
    const double e = u.e(s, i);
    const int mo = static_cast<int>(data.m[i]);
    const double wm = w[static_cast<std::size_t>(mo)];
    const double mu_obs = u.mu_obs[static_cast<std::size_t>(cz)][i];
    double psi = stratum_augmentation(data, u, s, i) * eta_w + e * eta_w;
    if (data.z[i] == z && data.d[i] == dz)
      psi += e / (u.p_den(z, dz, i) * u.pi_den(z, i)) * density_ratio(u, czp, cz, i) * wm * (data.y[i] - mu_obs);
    if (data.z[i] == zp && data.d[i] == dzp) psi += e / (u.p_den(zp, dzp, i) * u.pi_den(zp, i)) * (wm * mu_obs - eta_w);
    acc += psi;
  }
  const double den = positive_denominator(stratum_proportion_dr(data, u, s), s);
  return acc / static_cast<double>(data.n) / den;
}

inline void require_discrete(const UnitNuisances& u) {
  if (u.levels == 0) fail(ErrorKind::UnsupportedMediator, "sensitivity analysis needs a discrete mediator");
}

}  // namespace detail

inline double theta_mr_xi(const Dataset& data, const UnitNuisances& u, const XiSpec& spec, const TargetIndex& t) {
  detail::require_discrete(u);
  detail::require_xi_target(t, u.monotonicity);
  if (spec.mode != u.monotonicity) fail(ErrorKind::ConfigError, "sensitivity spec mode differs from the data's monotonicity");
  const XiFunctions f = expand(spec, u.levels);
  return detail::reweighted_mr(data, u, t, [&](std::size_t i) {
    return detail::xi_weights(xi_factors(f, cell_values(u, i), " (row " + std::to_string(i) + ")"), t);
  });
}

inline double theta_mr_xi(const Dataset& data, const NuisanceBundle& b, const XiSpec& spec, const TargetIndex& t,
                          const ClipPolicy& clip = {}) {
  return theta_mr_xi(data, evaluate_nuisances(data, b, clip), spec, t);
}

// rho at every level given the two arm pmfs; t(z, 0) = 1 and t(z, m) = zeta for m >= 1.
inline std::vector<double> rho_weights(const TSpec& spec, const std::vector<double>& r1, const std::vector<double>& r0) {
  if (!(spec.zeta > 0.0) || !std::isfinite(spec.zeta)) fail(ErrorKind::ConfigError, "zeta must be positive");
  auto t = [&](std::size_t j) { return j == 0 ? 1.0 : spec.zeta; };
  std::vector<double> out(r1.size());
  for (std::size_t m = 0; m < r1.size(); ++m) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < r1.size(); ++j) {
      num += t(j) / t(m) * r1[j];
      den += t(j) / t(m) * r0[j];
    }
    if (!(den > 0.0)) fail(ErrorKind::DivisionByZero, "mediator pmf sums to zero in the sensitivity weight");
    out[m] = num / den;
  }
  return out;
}

inline double rho_weight(const TSpec& spec, const NuisanceBundle& b, Stratum s, int m, Row x) {
  if (!b.mediator.discrete()) fail(ErrorKind::UnsupportedMediator, "sensitivity analysis needs a discrete mediator");
  std::vector<double> r1, r0;
  for (int j = 0; j <= b.mediator.m_max; ++j) {
    r1.push_back(b.r(1, s.d1, j, x));
    r0.push_back(b.r(0, s.d0, j, x));
  }
  return rho_weights(spec, r1, r0).at(static_cast<std::size_t>(m));
}

inline double theta_mr_t(const Dataset& data, const UnitNuisances& u, const TSpec& spec, Stratum s) {
  detail::require_discrete(u);
  const TargetIndex t{1, 0, s};
  const int c1 = cell_index(1, s.d1), c0 = cell_index(0, s.d0);
  return detail::reweighted_mr(data, u, t, [&](std::size_t i) {
    std::vector<double> r1(static_cast<std::size_t>(u.levels)), r0(static_cast<std::size_t>(u.levels));
    for (int m = 0; m < u.levels; ++m) {
      r1[static_cast<std::size_t>(m)] = u.r_at(i, c1, m);
      r0[static_cast<std::size_t>(m)] = u.r_at(i, c0, m);
    }
    return rho_weights(spec, r1, r0);
  });
}

inline double theta_mr_t(const Dataset& data, const NuisanceBundle& b, const TSpec& spec, Stratum s, const ClipPolicy& clip = {}) {
  return theta_mr_t(data, evaluate_nuisances(data, b, clip), spec, s);
}

// ---------------------------------------------------------------------------
// Grids

using SensitivityPoint = std::variant<XiSpec, TSpec>;

inline std::string describe(const SensitivityPoint& p) {
  std::ostringstream os;
  if (const auto* x = std::get_if<XiSpec>(&p)) {
    os << "lambda_m1=" << x->lambda_m1 << ";lambda_m0=" << x->lambda_m0 << ";lambda_y1=" << x->lambda_y1 << ";lambda_y0=" << x->lambda_y0;
  } else {
    os << "zeta=" << std::get<TSpec>(p).zeta;
  }
  return os.str();
}

struct EffectSelector {
  enum class Kind { Theta, PNIE, PNDE, PCE };
  Kind kind = Kind::PNDE;
  Stratum stratum = Stratum::compliers();
  std::pair<int, int> pair{1, 0};  // for Kind::Theta
  Scale scale = Scale::Difference;

  std::string name() const {
    std::string base;
    switch (kind) {
      case Kind::Theta: base = "theta" + stratum.label() + "_" + std::to_string(pair.first) + std::to_string(pair.second); break;
      case Kind::PNIE: base = "PNIE_" + stratum.label(); break;
      case Kind::PNDE: base = "PNDE_" + stratum.label(); break;
      case Kind::PCE: base = "PCE_" + stratum.label(); break;
    }
    return scale == Scale::RiskRatio && kind != Kind::Theta ? base + "_RR" : base;
  }
};

// Bias-corrected effect (log scale for ratios) at one grid point.
inline double sensitivity_effect(const Dataset& data, const UnitNuisances& u, const SensitivityPoint& pt, const EffectSelector& eff) {
  const Stratum s = eff.stratum;
  auto theta = [&](int z, int zp) {
    if (const auto* x = std::get_if<XiSpec>(&pt)) return theta_mr_xi(data, u, *x, {z, zp, s});
    if (z == 1 && zp == 0) return theta_mr_t(data, u, std::get<TSpec>(pt), s);
    return theta_mr(data, u, {z, zp, s});
  };
  if (eff.kind == EffectSelector::Kind::Theta) return theta(eff.pair.first, eff.pair.second);
  const bool need11 = eff.kind != EffectSelector::Kind::PNDE;
  const bool need00 = eff.kind != EffectSelector::Kind::PNIE;
  const bool need10 = eff.kind != EffectSelector::Kind::PCE;
  const double t11 = need11 ? theta(1, 1) : kNaN;
  const double t10 = need10 ? theta(1, 0) : kNaN;
  const double t00 = need00 ? theta(0, 0) : kNaN;
  auto contrast = [&](double a, double b) {
    if (eff.scale == Scale::Difference) return a - b;
    if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::DivisionByZero, "risk ratio needs positive theta");
    return std::log(a) - std::log(b);
  };
  switch (eff.kind) {
    case EffectSelector::Kind::PNIE: return contrast(t11, t10);
    case EffectSelector::Kind::PNDE: return contrast(t10, t00);
    default: return contrast(t11, t00);
  }
}

struct GridRow {
  std::string parameters;
  EstimateResult result;
  bool tipping = false;
  std::string message;
};

struct GridOptions {
  Inference inference = Inference::BootstrapPercentile;  // or None
  int B = 200;
  std::uint64_t seed = 1;
  double level = 0.95;
  ClipPolicy clip{};
  unsigned threads = 1;
};

inline std::vector<GridRow> sensitivity_grid(const Dataset& data, const ModelSpec& spec, const std::vector<SensitivityPoint>& grid,
                                             const EffectSelector& eff, const GridOptions& opt) {
  if (grid.empty()) fail(ErrorKind::ConfigError, "sensitivity grid is empty");
  if (!data.mediator.discrete()) fail(ErrorKind::UnsupportedMediator, "sensitivity analysis needs a discrete mediator");
  const UnitNuisances u = evaluate_nuisances(data, fit_parametric_bundle(data, spec), opt.clip);
  const bool ratio = eff.scale == Scale::RiskRatio && eff.kind != EffectSelector::Kind::Theta;
  const std::string scale = eff.kind == EffectSelector::Kind::Theta ? "theta" : (ratio ? "ratio" : "difference");
  std::vector<GridRow> rows(grid.size());
  std::vector<double> native(grid.size(), kNaN);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    rows[g].parameters = describe(grid[g]);
    rows[g].result.estimand = eff.name();
    rows[g].result.scale = scale;
    rows[g].result.method = Method::MR;
    rows[g].result.inference = opt.inference;
    rows[g].result.seed = opt.seed;
    try {
      native[g] = sensitivity_effect(data, u, grid[g], eff);
      rows[g].result.point = ratio ? std::exp(native[g]) : native[g];
    } catch (const Error& e) {
      rows[g].result.status = std::string(to_string(e.kind()));
      rows[g].message = e.what();
    }
  }
  const bool boot = opt.inference == Inference::BootstrapPercentile || opt.inference == Inference::BootstrapWald;
  if (boot) {
    BootstrapOptions bo;
    bo.B = opt.B;
    bo.seed = opt.seed;
    bo.level = opt.level;
    bo.threads = opt.threads;
    const BootstrapResult br = bootstrap(
        data,
        [&](const Dataset& rs) {
          const UnitNuisances ru = evaluate_nuisances(rs, fit_parametric_bundle(rs, spec), opt.clip);
          std::vector<double> v(grid.size(), kNaN);
          for (std::size_t g = 0; g < grid.size(); ++g) {
            if (std::isnan(native[g])) continue;
            try {
              v[g] = sensitivity_effect(rs, ru, grid[g], eff);
            } catch (const Error&) {
            }
          }
          return v;
        },
        bo);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      if (std::isnan(native[g])) continue;
      rows[g].result.resamples = opt.B;
      const Estimand e{rows[g].result.estimand, scale, native[g]};
      attach_interval(rows[g].result, e, br.se[g], br.ci_low[g], br.ci_high[g], opt.inference == Inference::BootstrapPercentile, opt.level);
    }
  }
  // a tipping point is a row whose conclusion about the null differs from the previous successful row
  const double null_value = ratio ? 1.0 : 0.0;
  std::optional<bool> prev;
  for (auto& row : rows) {
    const EstimateResult& r = row.result;
    if (std::isnan(r.point) || r.status != "ok") continue;
    bool excludes;
    if (std::isfinite(r.ci_low) && std::isfinite(r.ci_high)) excludes = r.ci_low > null_value || r.ci_high < null_value;
    else excludes = r.point > null_value;
    if (prev && *prev != excludes) row.tipping = true;
    prev = excludes;
  }
  return rows;
}

}  // namespace psmed
