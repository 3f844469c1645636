#include <gtest/gtest.h>

#include <map>
#include <random>

#include "ptrunc/linalg.hpp"
#include "support.hpp"

using namespace ptrunc;

namespace {

void expect_penrose(const Matrix& a, const Matrix& p, double tol) {
  const double scale = std::max(1.0, a.norm());
  EXPECT_LE((a * p * a - a).norm(), tol * scale);
  EXPECT_LE((p * a * p - p).norm(), tol * std::max(1.0, p.norm()));
  EXPECT_LE((a * p - (a * p).transpose()).norm(), tol * scale);
  EXPECT_LE((p * a - (p * a).transpose()).norm(), tol * scale);
}

RecursionDesign intercept_design(const std::vector<double>& q, const std::vector<double>& x) {
  RecursionDesign d;
  d.q = q;
  d.x = x;
  d.regressors.assign(q.size(), 1.0);
  d.instruments.assign(q.size(), 1.0);
  return d;
}

RecursionDesign covariate_design(const Dataset& data) {
  RecursionDesign d;
  d.p = 3;
  d.m = 3;
  for (const auto& r : data.records()) {
    d.q.push_back(r.q);
    d.x.push_back(r.x);
    d.regressors.insert(d.regressors.end(), {1.0, r.w1[0], r.z[0]});
    d.instruments.insert(d.instruments.end(), {1.0, r.w2[0], r.z[0]});
  }
  return d;
}

// Reverse-time Nelson-Aalen: sum over jump times s in [t, tau) of d(s) / #{q_i <= s < x_i}.
double reverse_nelson_aalen(const std::vector<double>& q, const std::vector<double>& x, double tau, double t) {
  std::map<double, int> jumps;
  for (double v : q) {
    if (v < tau && v >= t) ++jumps[v];
  }
  double total = 0.0;
  for (const auto& [s, d] : jumps) {
    int at_risk = 0;
    for (std::size_t i = 0; i < q.size(); ++i) at_risk += q[i] <= s && s < x[i];
    total += static_cast<double>(d) / at_risk;
  }
  return total;
}

}  // namespace

TEST(PseudoInverse, Examples) {
  EXPECT_TRUE(pseudo_inverse(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  EXPECT_TRUE(pseudo_inverse(Matrix::Zero(2, 3)).isZero(0.0));
  EXPECT_EQ(pseudo_inverse(Matrix::Zero(2, 3)).rows(), 3);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  const auto p = pseudo_inverse_with_rank(d);
  EXPECT_EQ(p.rank, 1);
  EXPECT_DOUBLE_EQ(p.inverse(0, 0), 0.5);
  EXPECT_EQ(p.inverse(1, 1), 0.0);
  expect_penrose(d, p.inverse, 1e-12);
}

TEST(PseudoInverse, PenroseConditionsOnRandomMatrices) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> norm;
  for (int k = 0; k < 100; ++k) {
    Matrix a(4, 4);
    for (int i = 0; i < 16; ++i) a.data()[i] = norm(rng);
    if (k % 3 == 1) a = a.leftCols(2) * a.topRows(2);  // rank 2
    if (k % 3 == 2) a.col(3) = a.col(0) + a.col(1);     // rank 3
    const auto p = pseudo_inverse_with_rank(a, 1e-8);
    expect_penrose(a, p.inverse, 1e-8);
    EXPECT_EQ(p.rank, k % 3 == 0 ? 4 : (k % 3 == 1 ? 2 : 3));
  }
}

TEST(PseudoInverse, RejectsNonFinite) {
  Matrix a = Matrix::Identity(2, 2);
  a(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(pseudo_inverse(a), Error);
}

TEST(BackwardFit, HandRecursion) {
  const auto design = intercept_design({1.0, 2.0}, {3.0, 4.0});
  const auto res = backward_additive_fit(design, 3.0, [](std::size_t, double) { return 1.0; });
  const auto& path = res.path;
  ASSERT_EQ(path.knot_count(), 2u);
  EXPECT_EQ(path.value(2.0)(0), 0.5);
  EXPECT_EQ(path.value(1.5)(0), 0.5);
  EXPECT_EQ(path.value(1.0)(0), 1.5);
  EXPECT_EQ(path.value(0.2)(0), 1.5);
  EXPECT_EQ(path.value(2.5)(0), 0.0);
  EXPECT_EQ(path.value(3.0)(0), 0.0);
  EXPECT_EQ(path.value(100.0)(0), 0.0);
  EXPECT_FALSE(res.flags.any());
}

TEST(BackwardFit, NoInteriorJumpsGivesZeroPath) {
  const auto design = intercept_design({2.0, 2.0}, {3.0, 4.0});
  const auto res = backward_additive_fit(design, 2.0, [](std::size_t, double) { return 1.0; });
  EXPECT_EQ(res.path.knot_count(), 0u);
  EXPECT_EQ(res.path.value(0.0)(0), 0.0);
}

TEST(BackwardFit, InterceptOnlyIsReverseNelsonAalen) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto data = ptrunc::testing::random_dataset(150, seed, 0, 0, 0, 0.0);
    std::vector<double> q, x;
    for (const auto& r : data.records()) {
      q.push_back(r.q);
      x.push_back(r.x);
    }
    const double tau = data.tau_q();
    const auto res = backward_additive_fit(intercept_design(q, x), tau, [](std::size_t, double) { return 1.0; });
    for (double t = 0.0; t < tau + 0.5; t += 0.05) {
      EXPECT_NEAR(res.path.value(t)(0), reverse_nelson_aalen(q, x, tau, t), 1e-12) << t;
    }
  }
}

TEST(BackwardFit, EstimatingEquationsSolvedAtEachJump) {
  auto data = ptrunc::testing::random_dataset(300, 7);
  const auto design = covariate_design(data);
  const double tau = data.tau_q();
  auto weight = [&](std::size_t i, double t) { return 1.0 + 0.1 * design.q[i] + 0.05 * t; };
  const auto res = backward_additive_fit(design, tau, weight);
  const auto& path = res.path;
  for (std::size_t k = 0; k < path.knot_count(); ++k) {
    const double t = path.times()[k];
    Vector after = k + 1 < path.knot_count() ? path.value(path.times()[k + 1]) : Vector::Zero(3);
    const Vector delta = path.value(t) - after;
    Matrix m = Matrix::Zero(3, 3);
    Vector j = Vector::Zero(3);
    for (std::size_t i = 0; i < design.size(); ++i) {
      if (!(design.q[i] <= t && t < design.x[i])) continue;
      Eigen::Map<const Vector> r(design.regressor(i), 3), v(design.instrument(i), 3);
      const double e = weight(i, t) * std::exp(r.dot(after));
      m += e * v * r.transpose();
      if (design.q[i] == t) j += e * v;
    }
    EXPECT_LE((m * delta - j).norm(), 1e-8 * std::max(1.0, j.norm())) << "jump " << t;
  }
}

TEST(BackwardFit, WeightScalingAndOrderInvariance) {
  auto data = ptrunc::testing::random_dataset(200, 8);
  const auto design = covariate_design(data);
  const double tau = data.tau_q();
  const auto a = backward_additive_fit(design, tau, [](std::size_t, double) { return 1.0; });
  const auto b = backward_additive_fit(design, tau, [](std::size_t, double) { return 3.5; });
  // Reverse the record order.
  RecursionDesign rev;
  rev.p = rev.m = 3;
  for (std::size_t i = design.size(); i-- > 0;) {
    rev.q.push_back(design.q[i]);
    rev.x.push_back(design.x[i]);
    rev.regressors.insert(rev.regressors.end(), design.regressor(i), design.regressor(i) + 3);
    rev.instruments.insert(rev.instruments.end(), design.instrument(i), design.instrument(i) + 3);
  }
  const auto c = backward_additive_fit(rev, tau, [](std::size_t, double) { return 1.0; });
  ASSERT_EQ(a.path.times(), b.path.times());
  ASSERT_EQ(a.path.times(), c.path.times());
  for (double t : a.path.times()) {
    EXPECT_LE((a.path.value(t) - b.path.value(t)).norm(), 1e-10 * (1.0 + a.path.value(t).norm()));
    EXPECT_LE((a.path.value(t) - c.path.value(t)).norm(), 1e-10 * (1.0 + a.path.value(t).norm()));
  }
}

TEST(BackwardFit, EmptyRiskSetAtJumpIsFlagged) {
  const auto design = intercept_design({1.0, 2.0}, {3.0, 4.0});
  const auto res = backward_additive_fit(design, 3.0, [](std::size_t, double t) { return t == 2.0 ? 0.0 : 1.0; });
  EXPECT_TRUE(res.flags.has(Flag::kEmptyRiskSetAtJump));
  EXPECT_EQ(res.empty_steps, 1u);
  EXPECT_EQ(res.path.value(1.0)(0), 1.0);
}

TEST(BackwardFit, RankDeficientStepIsFlagged) {
  // Instrument column identical to the intercept: M has rank 1 < 2.
  RecursionDesign d;
  d.p = d.m = 2;
  d.q = {1.0, 2.0, 0.5};
  d.x = {3.0, 4.0, 5.0};
  d.regressors = {1, 1, 1, 1, 1, 1};
  d.instruments = {1, 0, 1, 0, 1, 0};
  const auto res = backward_additive_fit(d, 3.0, [](std::size_t, double) { return 1.0; });
  EXPECT_TRUE(res.flags.has(Flag::kRankDeficientStep));
  EXPECT_GT(res.rank_deficient_steps, 0u);
}

TEST(BackwardFit, LinearPredictorClamp) {
  // Near-cancelling instruments make the first increment 1 / 0.001, so the next step overflows.
  RecursionDesign d;
  d.q = {1.0, 2.0, 0.5};
  d.x = {3.0, 4.0, 5.0};
  d.regressors = {1.0, 1.0, 1.0};
  d.instruments = {1.0, 1.0, -1.999};
  const auto res = backward_additive_fit(d, 3.0, [](std::size_t, double) { return 1.0; });
  EXPECT_TRUE(res.flags.has(Flag::kExpOverflowClamped));
}

TEST(CoefficientPath, CsvExportEndsWithTerminalZero) {
  CoefficientPath p(2, 3.0);
  Vector v(2);
  v << 0.5, -1.0;
  p.append_knot(2.0, v);
  p.finish_backward();
  std::ostringstream out;
  p.write_csv(out);
  EXPECT_EQ(out.str(), "time,coeff_1,coeff_2\n2,0.5,-1\n3,0,0\n");
}
