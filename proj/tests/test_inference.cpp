#include <atomic>
#include <random>

#include "support.hpp"

#include "psmed/inference.hpp"

using namespace psmed;

namespace {

Dataset normal_sample(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Dataset d;
  d.n = n;
  d.p = 1;
  for (std::size_t i = 0; i < n; ++i) {
    d.x.push_back(0.0);
    d.z.push_back(static_cast<int>(i % 2));
    d.d.push_back(static_cast<int>((i / 2) % 2));
    d.m.push_back(static_cast<double>((i / 4) % 2));
    d.y.push_back(g(rng));
  }
  return validate_dataset(d);
}

double sample_mean(const Dataset& d) {
  double s = 0.0;
  for (double v : d.y) s += v;
  return s / static_cast<double>(d.n);
}

}  // namespace

TEST(NormalQuantile, MatchesReferenceValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(0.75), 0.6744897501960817, 1e-9);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
  EXPECT_NEAR(normal_quantile(1e-6), -4.753424308822899, 1e-9);
  EXPECT_NEAR(normal_quantile(0.999), 3.090232306167814, 1e-9);
}

TEST(NormalQuantile, InvertsTheCdf) {
  for (double p = 0.001; p < 1.0; p += 0.0137) {
    const double x = normal_quantile(p);
    EXPECT_NEAR(0.5 * std::erfc(-x / std::sqrt(2.0)), p, 1e-12);
  }
}

TEST(WaldInterval, HalfWidths) {
  auto [lo, hi] = wald_interval(2.0, 1.0);
  EXPECT_NEAR(hi - 2.0, 1.95996, 1e-5);
  EXPECT_NEAR(2.0 - lo, 1.95996, 1e-5);
  auto [lo5, hi5] = wald_interval(0.0, 1.0, 0.5);
  EXPECT_NEAR(hi5, 0.67449, 1e-5);
  EXPECT_NEAR(lo5, -0.67449, 1e-5);
}

TEST(NearestRank, PicksCeilingRank) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  EXPECT_EQ(nearest_rank(v, 0.025), 1);
  EXPECT_EQ(nearest_rank(v, 0.5), 5);
  EXPECT_EQ(nearest_rank(v, 0.975), 10);
  EXPECT_EQ(nearest_rank(v, 0.3), 3);
}

TEST(Bootstrap, SampleMeanStandardError) {
  const Dataset d = normal_sample(400, 17);
  const BootstrapResult r = bootstrap(d, sample_mean, 1000, 5);
  EXPECT_NEAR(r.se[0], 0.05, 0.15 * 0.05);
  EXPECT_LT(r.ci_low[0], r.ci_high[0]);
}

TEST(Bootstrap, ConstantDataHasZeroSpread) {
  Dataset d = normal_sample(60, 1);
  for (auto& v : d.y) v = 3.5;
  const BootstrapResult r = bootstrap(d, sample_mean, 100, 2);
  EXPECT_EQ(r.se[0], 0.0);
  EXPECT_EQ(r.ci_low[0], 3.5);
  EXPECT_EQ(r.ci_high[0], 3.5);
}

TEST(Bootstrap, SameSeedSameReplicatesAcrossThreadCounts) {
  const Dataset d = normal_sample(120, 3);
  BootstrapOptions a;
  a.B = 80;
  a.seed = 11;
  BootstrapOptions b = a;
  b.threads = 4;
  auto f = [](const Dataset& x) { return std::vector<double>{sample_mean(x)}; };
  EXPECT_EQ(bootstrap(d, f, a).replicates, bootstrap(d, f, b).replicates);
  BootstrapOptions c = a;
  c.seed = 12;
  EXPECT_NE(bootstrap(d, f, a).replicates, bootstrap(d, f, c).replicates);
}

TEST(Bootstrap, PercentileIntervalCoversAtNominalRate) {
  int covered = 0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    const Dataset d = normal_sample(100, derive_seed(2024, static_cast<std::uint64_t>(rep)));
    const BootstrapResult r = bootstrap(d, sample_mean, 200, static_cast<std::uint64_t>(rep));
    if (r.ci_low[0] <= 0.0 && 0.0 <= r.ci_high[0]) ++covered;
  }
  const double cov = covered / static_cast<double>(reps);
  EXPECT_GE(cov, 0.93);
  EXPECT_LE(cov, 0.97);
}

TEST(Bootstrap, FailingReplicatesAreCountedAndBounded) {
  const Dataset d = normal_sample(100, 4);
  BootstrapOptions opt;
  opt.B = 100;
  std::atomic<int> calls{0};
  auto few = [&](const Dataset& x) -> std::vector<double> {
    if (x.y[0] > 1.9) fail(ErrorKind::EmptyStratumEstimate, "synthetic failure");
    return {sample_mean(x)};
  };
  std::size_t expected = 0;
  for (int b = 0; b < opt.B; ++b)
    if (d.y[resample_indices(d.n, derive_seed(opt.seed, static_cast<std::uint64_t>(b)))[0]] > 1.9) ++expected;
  ASSERT_LE(expected, 5u);
  const BootstrapResult r = bootstrap(d, few, opt);
  EXPECT_EQ(r.failed_replicates, expected);
  EXPECT_EQ(r.failed[0], expected);
  for (std::size_t b = 0; b < r.replicates.size(); ++b) EXPECT_EQ(r.replicates[b].size(), 1u);
  auto always = [&](const Dataset&) -> std::vector<double> {
    ++calls;
    fail(ErrorKind::EmptyStratumEstimate, "synthetic failure");
  };
  EXPECT_PSMED_ERROR(bootstrap(d, always, opt), ErrorKind::TooManyFailedReplicates);
  EXPECT_EQ(calls.load(), 100);
}

TEST(Bootstrap, TooFewReplicatesIsAConfigError) {
  const Dataset d = normal_sample(50, 4);
  EXPECT_PSMED_ERROR(bootstrap(d, sample_mean, 49, 1), ErrorKind::ConfigError);
}

TEST(Resample, IndicesInRangeAndSeeded) {
  const auto a = resample_indices(37, 9);
  EXPECT_EQ(a, resample_indices(37, 9));
  for (auto i : a) EXPECT_LT(i, 37u);
}
