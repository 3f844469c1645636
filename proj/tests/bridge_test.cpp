#include <gtest/gtest.h>

#include "ptrunc/bridge.hpp"
#include "support.hpp"

using namespace ptrunc;
using ptrunc::testing::random_dataset;
using ptrunc::testing::rec;

namespace {

// Product-limit style reverse-time CDF: G(t) = exp(-sum_{s >= t} d(s)/R(s)).
double reverse_na_cdf(const Dataset& d, double t) {
  double total = 0.0;
  std::vector<double> jumps;
  for (const auto& r : d.records()) {
    if (r.q >= t && r.q < d.tau_q()) jumps.push_back(r.q);
  }
  std::sort(jumps.begin(), jumps.end());
  jumps.erase(std::unique(jumps.begin(), jumps.end()), jumps.end());
  for (double s : jumps) {
    double events = 0.0, risk = 0.0;
    for (const auto& r : d.records()) {
      events += r.q == s;
      risk += r.q <= s && s < r.x;
    }
    total += events / risk;
  }
  return std::exp(-total);
}

Dataset strip_proxies(const Dataset& d, bool keep_z) {
  std::vector<ObservedRecord> out;
  for (auto r : d.records()) {
    r.w1.clear();
    r.w2.clear();
    if (!keep_z) r.z.clear();
    out.push_back(r);
  }
  return Dataset(out, d.tau_q());
}

Dataset uncensored(const Dataset& d) {
  std::vector<ObservedRecord> out;
  for (auto r : d.records()) {
    r.delta = 1;
    out.push_back(r);
  }
  return Dataset(out, d.tau_q());
}

}  // namespace

TEST(Ipcw, LiteralDefinitionMatchesRiskSetSimplification) {
  auto d = random_dataset(200, 21);
  const auto s_d = km_residual_survival(d);
  for (const auto& r : d.records()) {
    for (double t = 0.0; t < 5.0; t += 0.07) {
      const double literal = ipcw_time_varying(r, t, s_d);
      const bool at_risk = r.q <= t && t < r.x;
      const double simplified = at_risk ? 1.0 / std::max(s_d(t - r.q), kCensorFloor) : 0.0;
      EXPECT_EQ(literal, simplified);
    }
  }
}

TEST(Bridge, HandExample) {
  Dataset d({rec(1.0, 3.0, 1), rec(2.0, 4.0, 1)}, 3.0);
  const auto s_d = km_residual_survival(d);
  const auto bp = fit_bridge(d, s_d);
  EXPECT_DOUBLE_EQ(evaluate_bridge(bp, 1.0, {}, {}), std::exp(1.5));
  EXPECT_DOUBLE_EQ(evaluate_bridge(bp, 2.0, {}, {}), std::exp(0.5));
  EXPECT_EQ(evaluate_bridge(bp, 3.0, {}, {}), 1.0);
  const auto rp = fit_reverse_cdf(d, {}, s_d);
  EXPECT_DOUBLE_EQ(evaluate_cdf(rp, 1.0, {}), std::exp(-1.5));
  EXPECT_EQ(evaluate_cdf(rp, 3.5, {}), 1.0);
}

TEST(Bridge, NoCensoringNoProxiesIsInverseReverseCdf) {
  auto d = strip_proxies(uncensored(random_dataset(200, 4)), false);
  const auto s_d = km_residual_survival(d);
  const auto bp = fit_bridge(d, s_d);
  const auto rp = fit_reverse_cdf(d, {}, s_d);
  for (double t = 0.0; t < 3.0; t += 0.03) {
    const double g = reverse_na_cdf(d, t);
    EXPECT_NEAR(evaluate_bridge(bp, t, {}, {}) * g, 1.0, 1e-12) << t;
    EXPECT_NEAR(evaluate_cdf(rp, t, {}), g, 1e-12) << t;
  }
}

TEST(Bridge, EvaluateExamples) {
  BridgePath bp{CoefficientPath(3, 2.0, {1.0}, {0.1, 0.2, -0.3}), StepFunction::constant(1.0), {}, 1, 1};
  const std::vector<double> w1{1.0}, z{2.0};
  EXPECT_NEAR(evaluate_bridge(bp, 0.5, w1, z), std::exp(-0.3), 1e-15);
  EXPECT_NEAR(evaluate_bridge(bp, 1.0, w1, z), 0.74081822068171788, 1e-15);
  EXPECT_EQ(evaluate_bridge(bp, 1.5, w1, z), 1.0);
  EXPECT_EQ(evaluate_bridge(bp, 2.0, w1, z), 1.0);
  BridgePath zero{CoefficientPath(3, 2.0), StepFunction::constant(1.0), {}, 1, 1};
  EXPECT_EQ(evaluate_bridge(zero, 0.1, w1, z), 1.0);
  EXPECT_THROW(evaluate_bridge(bp, 0.5, {}, z), Error);
}

TEST(ReverseCdf, EvaluateExamplesAndClamps) {
  ReverseCdfPath rp{CoefficientPath(2, 2.0, {1.0}, {-0.5, 0.1}), {CovariateRole::kZ}, {}, 1};
  const std::vector<double> cov{2.0};
  Flags f;
  EXPECT_NEAR(evaluate_cdf(rp, 0.7, cov, &f), std::exp(-0.3), 1e-15);
  EXPECT_FALSE(f.any());
  EXPECT_EQ(evaluate_cdf(rp, 2.0, cov, &f), 1.0);
  const std::vector<double> big{10.0};
  EXPECT_EQ(evaluate_cdf(rp, 0.7, big, &f), 1.0);
  EXPECT_TRUE(f.has(Flag::kCdfClampedAboveOne));
  const std::vector<double> tiny{-300.0};
  EXPECT_EQ(evaluate_cdf(rp, 0.7, tiny, &f), kCdfFloor);
  EXPECT_TRUE(f.has(Flag::kCdfFloorHit));
  EXPECT_THROW(evaluate_cdf(rp, 0.7, {}), Error);
  ReverseCdfPath zero{CoefficientPath(2, 2.0), {CovariateRole::kZ}, {}, 1};
  EXPECT_EQ(evaluate_cdf(zero, 0.1, cov), 1.0);
}

TEST(Bridge, WithoutProxiesIsInverseCdfAtEveryJump) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto d = strip_proxies(random_dataset(250, seed), true);
    const auto s_d = km_residual_survival(d);
    static constexpr CovariateRole kZ[] = {CovariateRole::kZ};
    const auto bp = fit_bridge(d, s_d);
    const auto rp = fit_reverse_cdf(d, kZ, s_d);
    for (const auto& r : d.records()) {
      for (double t : bp.path.times()) {
        const double* a = rp.path.at(t);
        double lp = a[0] + a[1] * r.z[0];
        EXPECT_NEAR(evaluate_bridge(bp, t, {}, r.z) * std::exp(lp), 1.0, 1e-10);
      }
    }
  }
}

TEST(Bridge, ModesCoincideWithoutCensoring) {
  auto d = uncensored(random_dataset(300, 12));
  const auto s_d = km_residual_survival(d);
  const auto a = fit_bridge(d, s_d, WeightMode::kTimeVarying);
  const auto b = fit_bridge(d, s_d, WeightMode::kCaseWeight);
  ASSERT_EQ(a.path.times(), b.path.times());
  for (double t : a.path.times()) EXPECT_EQ(a.path.value(t), b.path.value(t));
}

TEST(Bridge, MomentEquationOnUncensoredData) {
  // Sum over jumps of phi_i {exp(r_i B(t+)) r_i dB(t) - exp(r_i B(t+)) dN_i(t)} vanishes with phi = (1, W2, Z).
  auto d = uncensored(random_dataset(400, 31));
  const auto bp = fit_bridge(d, km_residual_survival(d));
  const auto& path = bp.path;
  Vector total = Vector::Zero(3);
  double scale = 0.0;
  for (std::size_t k = 0; k < path.knot_count(); ++k) {
    const double t = path.times()[k];
    const Vector after = k + 1 < path.knot_count() ? path.value(path.times()[k + 1]) : Vector::Zero(3);
    const Vector db = path.value(t) - after;
    for (const auto& r : d.records()) {
      if (!(r.q <= t && t < r.x)) continue;
      Vector reg(3), phi(3);
      reg << 1.0, r.w1[0], r.z[0];
      phi << 1.0, r.w2[0], r.z[0];
      const double e = std::exp(reg.dot(after));
      total += phi * e * (reg.dot(db) - (r.q == t ? 1.0 : 0.0));
      scale += e;
    }
  }
  EXPECT_LE(total.norm(), 1e-8 * scale);
}

TEST(Bridge, CensorFloorFlag) {
  auto d = random_dataset(100, 2);
  const StepFunction collapsed({0.5}, {0.0}, 1.0);
  const auto bp = fit_bridge(d, collapsed);
  EXPECT_TRUE(bp.flags.has(Flag::kCensorWeightFloorHit));
  for (const auto& r : d.records()) EXPECT_GT(evaluate_bridge(bp, r.x, r.w1, r.z), 0.0);
}

TEST(ReverseCdf, LatentRoleRequiresColumn) {
  auto d = random_dataset(50, 3);
  static constexpr CovariateRole kU[] = {CovariateRole::kU};
  EXPECT_THROW(fit_reverse_cdf(d, kU, km_residual_survival(d)), Error);
  auto du = random_dataset(50, 3, 1, 1, 1, 0.3, 1);
  const auto rp = fit_reverse_cdf(du, kU, km_residual_survival(du));
  EXPECT_EQ(rp.covariate_dim, 1u);
}
