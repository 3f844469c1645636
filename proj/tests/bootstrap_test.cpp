#include <gtest/gtest.h>

#include <numeric>

#include "ptrunc/bootstrap.hpp"
#include "support.hpp"

using namespace ptrunc;
using ptrunc::testing::random_dataset;

TEST(DrawWeights, NormalizedPositiveDeterministic) {
  EXPECT_EQ(draw_weights(1, 5), std::vector<double>{1.0});
  for (std::size_t n : {2u, 10u, 1000u}) {
    const auto w = draw_weights(n, derive_seed(3, n));
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (double v : w) EXPECT_GT(v, 0.0);
    EXPECT_EQ(w, draw_weights(n, derive_seed(3, n)));
    EXPECT_NE(w, draw_weights(n, derive_seed(4, n)));
  }
  EXPECT_THROW(draw_weights(0, 1), Error);
}

TEST(DrawWeights, ExponentialMoments) {
  // n * w_i is close to Exp(1) for large n: mean 1, variance 1.
  const std::size_t n = 200000;
  const auto w = draw_weights(n, 99);
  double m = 0.0, v = 0.0;
  for (double x : w) m += x * n;
  m /= n;
  for (double x : w) v += (x * n - m) * (x * n - m);
  v /= n - 1;
  EXPECT_NEAR(m, 1.0, 1e-9);
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(Bootstrap, DegenerateWeightsGiveZeroSe) {
  auto d = random_dataset(150, 2);
  const EstimatorSpec spec{Method::kPqb, EstimandSpec(EstimandKind::kSurvProb, 1.0)};
  const double point = run_estimator(d, spec).theta_hat;
  BootstrapConfig cfg;
  cfg.replications = 5;
  const WeightSource uniform = [](std::size_t, std::size_t n) { return std::vector<double>(n, 1.0 / n); };
  const auto res = bootstrap_estimate(d, spec, cfg, std::nullopt, uniform);
  EXPECT_NEAR(res.se, 0.0, 1e-13);
  for (double v : res.replicate_estimates) EXPECT_NEAR(v, point, 1e-12);
  EXPECT_NEAR(res.ci_low, res.ci_high, 1e-12);
}

TEST(Bootstrap, IndependentOfThreadCount) {
  auto d = random_dataset(200, 5);
  const EstimatorSpec spec{Method::kIpqw, EstimandSpec(EstimandKind::kRmst, 1.5)};
  BootstrapConfig cfg;
  cfg.replications = 24;
  cfg.seed = 77;
  cfg.threads = 1;
  const auto a = bootstrap_estimate(d, spec, cfg);
  cfg.threads = 4;
  const auto b = bootstrap_estimate(d, spec, cfg);
  EXPECT_EQ(a.replicate_estimates, b.replicate_estimates);
  EXPECT_EQ(a.se, b.se);
  EXPECT_EQ(a.ci_low, b.ci_low);
  EXPECT_GE(a.se, 0.0);
  EXPECT_LE(a.ci_low, a.theta_hat);
  EXPECT_GE(a.ci_high, a.theta_hat);
}

TEST(Bootstrap, WaldIntervalFromReplicateSd) {
  auto d = random_dataset(120, 8);
  const EstimatorSpec spec{Method::kPl, EstimandSpec(EstimandKind::kSurvProb, 1.0)};
  BootstrapConfig cfg;
  cfg.replications = 30;
  const auto r = bootstrap_estimate(d, spec, cfg);
  auto reps = r.replicate_estimates;
  std::reverse(reps.begin(), reps.end());
  double mean = std::accumulate(reps.begin(), reps.end(), 0.0) / reps.size();
  double ss = 0.0;
  for (double v : reps) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(r.se, std::sqrt(ss / (reps.size() - 1)), 1e-15);
  EXPECT_NEAR(r.ci_high - r.theta_hat, 1.959963984540054 * r.se, 1e-12);
}

TEST(Bootstrap, FailedReplicatesDroppedThenTooMany) {
  BootstrapConfig cfg;
  cfg.replications = 10;
  const auto w = exponential_weights(1);
  int calls = 0;
  auto fail_some = [&](std::span<const double> weights) -> double {
    if (weights[0] > 0.2) throw Error(ErrorCode::kZeroDenominator, "synthetic");
    return weights[0];
  };
  std::size_t expected_failures = 0;
  for (std::size_t r = 0; r < 10; ++r) expected_failures += w(r, 3)[0] > 0.2;
  if (expected_failures <= 2) {
    const auto res = bootstrap_with(3, 0.3, fail_some, cfg, w);
    EXPECT_EQ(res.n_failed, expected_failures);
  } else {
    EXPECT_THROW(bootstrap_with(3, 0.3, fail_some, cfg, w), Error);
  }
  auto fail_three = [&](std::span<const double>) -> double {
    if (calls++ < 3) throw Error(ErrorCode::kZeroDenominator, "synthetic");
    return 0.5;
  };
  try {
    bootstrap_with(3, 0.5, fail_three, cfg, w);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooManyFailures);
  }
  calls = 0;
  auto fail_two = [&](std::span<const double> weights) -> double {
    if (calls++ < 2) throw Error(ErrorCode::kZeroDenominator, "synthetic");
    return weights[1];
  };
  EXPECT_EQ(bootstrap_with(3, 0.5, fail_two, cfg, w).n_failed, 2u);
}

TEST(Bootstrap, OtherErrorsPropagate) {
  BootstrapConfig cfg;
  cfg.replications = 4;
  cfg.threads = 2;
  auto bad = [](std::span<const double>) -> double { throw Error(ErrorCode::kDimensionMismatch, "synthetic"); };
  EXPECT_THROW(bootstrap_with(3, 0.5, bad, cfg, exponential_weights(1)), Error);
  cfg.replications = 1;
  EXPECT_THROW(bootstrap_with(3, 0.5, [](auto) { return 0.0; }, cfg, exponential_weights(1)), Error);
}

TEST(Bootstrap, EstimateCarriesInterval) {
  auto d = random_dataset(150, 10);
  BootstrapConfig cfg;
  cfg.replications = 10;
  const auto e = estimate_with_bootstrap(d, {Method::kPqb, EstimandSpec(EstimandKind::kSurvProb, 1.0)}, cfg);
  ASSERT_TRUE(e.se.has_value());
  EXPECT_LE(*e.ci_low, e.theta_hat);
  EXPECT_GE(*e.ci_high, e.theta_hat);
  EXPECT_EQ(e.bootstrap_replications, 10u);
}

TEST(ParallelFor, VisitsEachIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t k) { hits[k] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
}
