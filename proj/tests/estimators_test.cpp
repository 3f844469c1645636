#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "ptrunc/estimators.hpp"
#include "support.hpp"

using namespace ptrunc;
using ptrunc::testing::random_dataset;
using ptrunc::testing::rec;

namespace {

constexpr Method kFitted[] = {Method::kPqb, Method::kPqbCw, Method::kIpqw, Method::kIpqwCw, Method::kIpqwU, Method::kIpqwUCw};

Dataset without_w(const Dataset& d) {
  std::vector<ObservedRecord> out;
  for (auto r : d.records()) {
    r.w1.clear();
    r.w2.clear();
    out.push_back(r);
  }
  return Dataset(out, d.tau_q());
}

Dataset all_events(const Dataset& d) {
  std::vector<ObservedRecord> out;
  for (auto r : d.records()) {
    r.delta = 1;
    out.push_back(r);
  }
  return Dataset(out, d.tau_q());
}

}  // namespace

TEST(AdjustedView, Examples) {
  Dataset d({rec(0, 2, 1), rec(1, 7, 0), rec(0.5, 3, 0), rec(4, 6, 1)});
  ASSERT_EQ(d.tau_q(), 4.0);
  const auto v = adjusted_view(d, 5.0);
  EXPECT_EQ(v[0].x_tilde, 2.0);
  EXPECT_EQ(v[0].delta_tilde, 1);
  EXPECT_EQ(v[1].x_tilde, 5.0);
  EXPECT_EQ(v[1].delta_tilde, 1);
  EXPECT_EQ(v[2].x_tilde, 3.0);
  EXPECT_EQ(v[2].delta_tilde, 0);
  EXPECT_EQ(v[3].x_tilde, 5.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_LE(v[i].x_tilde, d[i].x);
    EXPECT_GE(v[i].delta_tilde, d[i].delta);
  }
  EXPECT_THROW(adjusted_view(d, 0.0), Error);
}

TEST(Estimators, ConstantEstimandGivesOne) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto d = random_dataset(200, seed, 1, 1, 1, 0.3, 1);
    double min_x = d[0].x;
    for (const auto& r : d.records()) min_x = std::min(min_x, r.x);
    const EstimandSpec one(EstimandKind::kSurvProb, min_x / 2.0);
    for (auto m : kFitted) {
      const auto e = run_estimator(d, {m, one});
      EXPECT_EQ(e.theta_hat, 1.0) << method_name(m);
    }
  }
}

TEST(Estimators, RangesAndWeights) {
  auto d = random_dataset(300, 9, 1, 1, 1, 0.3, 1);
  for (auto kind : {EstimandKind::kSurvProb, EstimandKind::kRmst}) {
    const EstimandSpec nu(kind, 1.2);
    for (auto m : {Method::kPqb, Method::kPqbCw, Method::kIpqw, Method::kIpqwCw, Method::kIpqwU, Method::kIpqwUCw,
                   Method::kPl, Method::kKm, Method::kNaive}) {
      const auto e = run_estimator(d, {m, nu});
      EXPECT_GE(e.theta_hat, 0.0);
      EXPECT_LE(e.theta_hat, nu.upper_bound());
      EXPECT_GE(e.weights.min, 0.0);
      EXPECT_LE(e.weights.min, e.weights.max);
    }
  }
}

TEST(Estimators, WithoutProxiesMatchesIpqwOnZ) {
  static constexpr CovariateRole kZ[] = {CovariateRole::kZ};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto d = without_w(random_dataset(200, 100 + seed));
    const EstimandSpec nu(EstimandKind::kSurvProb, 1.0);
    const auto a = estimate_pqb(d, nu);
    const auto b = estimate_ipqw(d, nu, kZ);
    EXPECT_NEAR(a.theta_hat, b.theta_hat, 1e-10) << seed;
  }
}

TEST(Estimators, OrderInvariance) {
  auto d = random_dataset(250, 44, 1, 1, 1, 0.3, 1);
  auto recs = d.records();
  std::mt19937_64 rng(1);
  std::shuffle(recs.begin(), recs.end(), rng);
  Dataset shuffled(recs, d.tau_q());
  const EstimandSpec nu(EstimandKind::kRmst, 1.5);
  for (auto m : kFitted) {
    EXPECT_NEAR(run_estimator(d, {m, nu}).theta_hat, run_estimator(shuffled, {m, nu}).theta_hat, 1e-12)
        << method_name(m);
  }
}

TEST(Estimators, UncensoredModesCoincide) {
  auto d = all_events(random_dataset(250, 5, 1, 1, 1, 0.0, 1));
  for (auto kind : {EstimandKind::kSurvProb, EstimandKind::kRmst}) {
    const EstimandSpec nu(kind, 1.0);
    EXPECT_NEAR(run_estimator(d, {Method::kPqb, nu}).theta_hat, run_estimator(d, {Method::kPqbCw, nu}).theta_hat, 1e-12);
    EXPECT_NEAR(run_estimator(d, {Method::kIpqw, nu}).theta_hat, run_estimator(d, {Method::kIpqwCw, nu}).theta_hat,
                1e-12);
  }
}

TEST(Estimators, ClassicalExamples) {
  std::vector<ObservedRecord> recs;
  for (int i = 1; i <= 10; ++i) recs.push_back(rec(0, 0.3 * i, 1));
  Dataset d(recs);
  const EstimandSpec nu(EstimandKind::kSurvProb, 1.0);
  EXPECT_NEAR(estimate_classical(d, nu, Method::kPl).theta_hat, 0.7, 1e-14);
  Dataset late({rec(0, 3, 1), rec(0.5, 4, 0), rec(1, 5, 1)});
  EXPECT_DOUBLE_EQ(estimate_classical(late, EstimandSpec(EstimandKind::kRmst, 2.0), Method::kPl).theta_hat, 2.0);
  EXPECT_DOUBLE_EQ(estimate_classical(late, EstimandSpec(EstimandKind::kRmst, 2.0), Method::kKm).theta_hat, 2.0);
  EXPECT_THROW(estimate_classical(late, nu, Method::kPqb), Error);
}

TEST(Estimators, CurveUndefinedBeforeEntry) {
  Dataset d({rec(2, 3, 1), rec(2.5, 4, 1)});
  const auto e = estimate_classical(d, EstimandSpec(EstimandKind::kSurvProb, 1.0), Method::kPl);
  EXPECT_TRUE(e.flags.has(Flag::kCurveUndefinedAt));
  EXPECT_EQ(e.theta_hat, 1.0);
}

TEST(Estimators, ZeroDenominator) {
  Dataset d({rec(0, 1, 0), rec(1.5, 2, 0)});
  try {
    estimate_pqb(d, EstimandSpec(EstimandKind::kSurvProb, 2.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroDenominator);
  }
}

TEST(Estimators, OracleRequiresNuisance) {
  auto d = random_dataset(50, 1, 1, 1, 1, 0.3, 1);
  EXPECT_THROW(run_estimator(d, {Method::kIpqwOracle, EstimandSpec(EstimandKind::kSurvProb, 1.0)}), Error);
  auto oracle = std::make_shared<OracleNuisance>();
  oracle->censor_survival = [](double) { return 1.0; };
  oracle->truncation_cdf = [](double, const ObservedRecord&) { return 1.0; };
  const auto e = run_estimator(d, {Method::kIpqwOracle, EstimandSpec(EstimandKind::kSurvProb, 1.0), kDefaultRelTol, oracle});
  EXPECT_GT(e.n_used, 0u);
}

TEST(Estimators, CaseWeightsOfOneMatchUnweighted) {
  auto d = random_dataset(200, 77, 1, 1, 1, 0.3, 1);
  const std::vector<double> ones(d.size(), 1.0);
  const EstimandSpec nu(EstimandKind::kSurvProb, 1.0);
  for (auto m : {Method::kPqb, Method::kIpqw, Method::kPl, Method::kKm, Method::kNaive}) {
    EXPECT_EQ(run_estimator(d, {m, nu}).theta_hat, run_estimator(d, {m, nu}, ones).theta_hat);
  }
}

TEST(Methods, NamesRoundTrip) {
  for (auto m : kAllMethods) {
    EXPECT_EQ(parse_method(std::string(method_name(m))), m);
  }
  EXPECT_EQ(parse_method("ipqwucw"), Method::kIpqwUCw);
  EXPECT_THROW(parse_method("bogus"), Error);
}
