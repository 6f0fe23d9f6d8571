#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "psmed/core.hpp"
#include "psmed/estimators.hpp"
#include "psmed/learners.hpp"
#include "psmed/parallel.hpp"

namespace psmed {

// Inverse standard normal CDF: rational initial guess refined by Halley steps.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - plow) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  for (int it = 0; it < 2; ++it) {
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
    x = x - u / (1 + x * u / 2);
  }
  return x;
}

inline std::pair<double, double> wald_interval(double point, double se, double level = 0.95) {
  const double h = normal_quantile(0.5 * (1.0 + level)) * se;
  return {point - h, point + h};
}

enum class Inference { None, BootstrapPercentile, BootstrapWald, EifWald };

inline std::string to_string(Inference i) {
  switch (i) {
    case Inference::None: return "none";
    case Inference::BootstrapPercentile: return "bootstrap_percentile";
    case Inference::BootstrapWald: return "bootstrap_wald";
    case Inference::EifWald: return "eif_wald";
  }
  return "?";
}

struct EstimateResult {
  std::string estimand;
  std::string scale = "difference";  // ratio rows report se on the log scale
  double point = kNaN;
  double se = kNaN;
  double ci_low = kNaN;
  double ci_high = kNaN;
  Method method = Method::MR;
  Inference inference = Inference::None;
  int resamples = 0;  // B for bootstrap, V for cross-fitting
  std::uint64_t seed = 0;
  std::string status = "ok";
};

struct BootstrapResult {
  std::vector<std::vector<double>> replicates;  // B x k, NaN where a replicate failed
  std::vector<double> se;
  std::vector<double> ci_low, ci_high;  // nearest-rank percentile interval
  std::vector<std::size_t> failed;      // per component
  std::size_t failed_replicates = 0;    // replicates whose closure threw
};

inline std::vector<std::size_t> resample_indices(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(bounded_draw(rng, n));
  return idx;
}

// Nearest-rank quantile of sorted values: the ceil(q N)-th smallest.
inline double nearest_rank(const std::vector<double>& sorted, double q) {
  const double N = static_cast<double>(sorted.size());
  auto r = static_cast<std::size_t>(std::ceil(q * N - 1e-9));
  r = std::clamp<std::size_t>(r, 1, sorted.size());
  return sorted[r - 1];
}

using ReplicateClosure = std::function<std::vector<double>(const Dataset&)>;

struct BootstrapOptions {
  int B = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  double max_fail_fraction = 0.05;
  unsigned threads = 1;
};

inline BootstrapResult bootstrap(const Dataset& data, const ReplicateClosure& est, const BootstrapOptions& opt) {
  if (opt.B < 50) fail(ErrorKind::ConfigError, "bootstrap needs B >= 50");
  const auto B = static_cast<std::size_t>(opt.B);
  BootstrapResult out;
  out.replicates.resize(B);
  std::vector<std::string> messages(B);
  std::vector<char> threw(B, 0);
  parallel_for(B, opt.threads, [&](std::size_t b) {
    const Dataset rs = subset_rows(data, resample_indices(data.n, derive_seed(opt.seed, b)));
    try {
      out.replicates[b] = est(rs);
    } catch (const Error& e) {
      threw[b] = 1;
      messages[b] = e.what();
    }
  });
  std::size_t k = 0;
  for (const auto& r : out.replicates) k = std::max(k, r.size());
  std::string first_message;
  for (std::size_t b = 0; b < B; ++b)
    if (threw[b] || out.replicates[b].size() != k) {
      ++out.failed_replicates;
      if (first_message.empty()) first_message = messages[b];
      out.replicates[b].assign(k, kNaN);
    }
  if (static_cast<double>(out.failed_replicates) > opt.max_fail_fraction * static_cast<double>(B))
    fail(ErrorKind::TooManyFailedReplicates, std::to_string(out.failed_replicates) + " of " + std::to_string(B) +
                                                 " replicates failed; first: " + first_message);
  const double alpha = 1.0 - opt.level;
  out.se.assign(k, kNaN);
  out.ci_low.assign(k, kNaN);
  out.ci_high.assign(k, kNaN);
  out.failed.assign(k, 0);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> v;
    for (std::size_t b = 0; b < B; ++b) {
      const double x = out.replicates[b][j];
      if (std::isfinite(x)) v.push_back(x);
    }
    out.failed[j] = B - v.size();
    if (static_cast<double>(out.failed[j]) > opt.max_fail_fraction * static_cast<double>(B) || v.size() < 2) continue;
    double mean = 0.0, m2 = 0.0;
    for (std::size_t t = 0; t < v.size(); ++t) {
      const double dlt = v[t] - mean;
      mean += dlt / static_cast<double>(t + 1);
      m2 += dlt * (v[t] - mean);
    }
    out.se[j] = std::sqrt(m2 / static_cast<double>(v.size() - 1));
    std::sort(v.begin(), v.end());
    out.ci_low[j] = nearest_rank(v, alpha / 2);
    out.ci_high[j] = nearest_rank(v, 1 - alpha / 2);
  }
  return out;
}

inline BootstrapResult bootstrap(const Dataset& data, const std::function<double(const Dataset&)>& est, int B, std::uint64_t seed) {
  BootstrapOptions opt;
  opt.B = B;
  opt.seed = seed;
  return bootstrap(data, [&](const Dataset& d) { return std::vector<double>{est(d)}; }, opt);
}

}  // namespace psmed
