#pragma once

// Moore-Penrose inverse for small dense matrices and the backward-in-time
// additive estimating-equation solver shared by the bridge fit and the
// reverse-time CDF fit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <ostream>
#include <vector>

#include "ptrunc/error.hpp"

namespace ptrunc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double kDefaultRelTol = 1e-8;
constexpr double kLinearPredictorBound = 50.0;

struct PseudoInverse {
  Matrix inverse;
  Eigen::Index rank = 0;
};

/// A^+ via SVD; singular values at or below rel_tol * sigma_max are treated as zero.
inline PseudoInverse pseudo_inverse_with_rank(const Matrix& a, double rel_tol = kDefaultRelTol) {
  if (!a.allFinite()) throw Error(ErrorCode::kNonFiniteInput, "pseudo-inverse input has non-finite entries");
  PseudoInverse out{Matrix::Zero(a.cols(), a.rows()), 0};
  if (a.size() == 0) return out;
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double cutoff = rel_tol * (sv.size() ? sv(0) : 0.0);
  Vector inv_sv = Vector::Zero(sv.size());
  for (Eigen::Index k = 0; k < sv.size(); ++k) {
    if (sv(k) > cutoff && sv(k) > 0.0) {
      inv_sv(k) = 1.0 / sv(k);
      ++out.rank;
    }
  }
  out.inverse = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

inline Matrix pseudo_inverse(const Matrix& a, double rel_tol = kDefaultRelTol) {
  return pseudo_inverse_with_rank(a, rel_tol).inverse;
}

/// Vector-valued left-continuous step function B(t) with B = 0 on [tau, inf).
/// Knot k stores B(times[k]), which already includes the jump at times[k], so
/// B(t) = values[k] for t in (times[k-1], times[k]].
class CoefficientPath {
 public:
  CoefficientPath() = default;
  CoefficientPath(std::size_t dim, double tau) : dim_(dim), tau_(tau) {}
  CoefficientPath(std::size_t dim, double tau, std::vector<double> times, std::vector<double> values)
      : dim_(dim), tau_(tau), times_(std::move(times)), values_(std::move(values)) {
    if (values_.size() != times_.size() * dim_) throw Error(ErrorCode::kDimensionMismatch, "path values do not match knots");
  }

  std::size_t dim() const { return dim_; }
  double tau() const { return tau_; }
  std::size_t knot_count() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }
  const double* knot_values(std::size_t k) const { return values_.data() + k * dim_; }

  /// Pointer to B(t) (dim() entries), or nullptr when B(t) = 0.
  const double* at(double t) const {
    if (t >= tau_) return nullptr;
    const auto it = std::lower_bound(times_.begin(), times_.end(), t);
    if (it == times_.end()) return nullptr;
    return knot_values(static_cast<std::size_t>(it - times_.begin()));
  }

  Vector value(double t) const {
    Vector v = Vector::Zero(static_cast<Eigen::Index>(dim_));
    if (const double* b = at(t)) {
      for (std::size_t j = 0; j < dim_; ++j) v(static_cast<Eigen::Index>(j)) = b[j];
    }
    return v;
  }

  /// Linear predictor (1, covariates) . B(t).
  double linear_predictor(double t, const double* design) const {
    const double* b = at(t);
    if (!b) return 0.0;
    double lp = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) lp += design[j] * b[j];
    return lp;
  }

  CoefficientPath negated() const {
    auto out = *this;
    for (double& v : out.values_) v = -v;
    return out;
  }

  void append_knot(double t, const Vector& b) {
    times_.push_back(t);
    for (std::size_t j = 0; j < dim_; ++j) values_.push_back(b(static_cast<Eigen::Index>(j)));
  }

  /// Reverses knots appended in decreasing time order.
  void finish_backward() {
    std::reverse(times_.begin(), times_.end());
    std::vector<double> v(values_.size());
    const std::size_t k = times_.size();
    for (std::size_t r = 0; r < k; ++r) {
      std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>((k - 1 - r) * dim_), dim_,
                  v.begin() + static_cast<std::ptrdiff_t>(r * dim_));
    }
    values_ = std::move(v);
  }

  void write_csv(std::ostream& out) const {
    out << "time";
    for (std::size_t j = 0; j < dim_; ++j) out << ",coeff_" << j + 1;
    out << '\n';
    for (std::size_t k = 0; k < times_.size(); ++k) {
      out << times_[k];
      for (std::size_t j = 0; j < dim_; ++j) out << ',' << values_[k * dim_ + j];
      out << '\n';
    }
    out << tau_;
    for (std::size_t j = 0; j < dim_; ++j) out << ",0";
    out << '\n';
  }

 private:
  std::size_t dim_ = 0;
  double tau_ = 0.0;
  std::vector<double> times_;
  std::vector<double> values_;
};

/// Per-record inputs of the backward recursion, stored row-major: regressors
/// r_i (length p, leading 1) and instruments v_i (length m, leading 1).
struct RecursionDesign {
  std::vector<double> q;
  std::vector<double> x;
  std::vector<double> regressors;
  std::vector<double> instruments;
  std::size_t p = 1;
  std::size_t m = 1;

  std::size_t size() const { return q.size(); }
  const double* regressor(std::size_t i) const { return regressors.data() + i * p; }
  const double* instrument(std::size_t i) const { return instruments.data() + i * m; }
};

struct RecursionResult {
  CoefficientPath path;
  Flags flags;
  std::size_t rank_deficient_steps = 0;
  std::size_t empty_steps = 0;
};

/// Solves the additive estimating equations backwards from B(tau) = 0.
///
/// At each distinct jump time t < tau (in decreasing order), with risk set
/// R(t) = {i : q_i <= t < x_i} and e_i = exp{r_i . B(t+)}:
///   M(t) = sum_{i in R(t)} w_i(t) e_i v_i r_i^T,
///   J(t) = sum_{i : q_i = t} w_i(t) e_i v_i,
///   B(t) = B(t+) + M(t)^+ J(t).
/// The 1/n factors cancel. Tied jump times are one update. `weight(i, t)` must
/// be finite and nonnegative.
template <class WeightFn>
RecursionResult backward_additive_fit(const RecursionDesign& design, double tau, WeightFn&& weight,
                                      double rel_tol = kDefaultRelTol) {
  const std::size_t n = design.size();
  const std::size_t p = design.p, m = design.m;
  if (design.x.size() != n || design.regressors.size() != n * p || design.instruments.size() != n * m) {
    throw Error(ErrorCode::kDimensionMismatch, "recursion design arrays are inconsistent");
  }
  RecursionResult out{CoefficientPath(p, tau), {}, 0, 0};

  // Only records entering before tau can be at risk on [0, tau).
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (design.q[i] < tau) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return design.q[a] < design.q[b]; });

  Vector b = Vector::Zero(static_cast<Eigen::Index>(p));
  Matrix mat(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  Vector jump(static_cast<Eigen::Index>(m));
  std::vector<double> acc(m * p);
  std::size_t end = order.size();
  while (end > 0) {
    const double t = design.q[order[end - 1]];
    std::size_t begin = end;
    while (begin > 0 && design.q[order[begin - 1]] == t) --begin;

    std::fill(acc.begin(), acc.end(), 0.0);
    jump.setZero();
    bool any_at_risk = false;
    // order[0, end) are the records with q_i <= t.
    for (std::size_t s = 0; s < end; ++s) {
      const std::size_t i = order[s];
      if (!(design.x[i] > t)) continue;
      const double w = weight(i, t);
      if (w == 0.0) continue;
      const double* r = design.regressor(i);
      double lp = 0.0;
      for (std::size_t j = 0; j < p; ++j) lp += r[j] * b(static_cast<Eigen::Index>(j));
      if (lp > kLinearPredictorBound || lp < -kLinearPredictorBound) {
        lp = std::clamp(lp, -kLinearPredictorBound, kLinearPredictorBound);
        out.flags.set(Flag::kExpOverflowClamped);
      }
      const double ew = w * std::exp(lp);
      const double* v = design.instrument(i);
      for (std::size_t a = 0; a < m; ++a) {
        const double va = ew * v[a];
        double* row = acc.data() + a * p;
        for (std::size_t c = 0; c < p; ++c) row[c] += va * r[c];
      }
      if (s >= begin) {
        for (std::size_t a = 0; a < m; ++a) jump(static_cast<Eigen::Index>(a)) += ew * v[a];
      }
      any_at_risk = true;
    }
    end = begin;
    if (!any_at_risk) {
      out.flags.set(Flag::kEmptyRiskSetAtJump);
      ++out.empty_steps;
      continue;
    }
    if (jump.isZero(0.0)) continue;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t c = 0; c < p; ++c) mat(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) = acc[a * p + c];
    }
    const auto pinv = pseudo_inverse_with_rank(mat, rel_tol);
    if (pinv.rank < static_cast<Eigen::Index>(std::min(m, p))) {
      out.flags.set(Flag::kRankDeficientStep);
      ++out.rank_deficient_steps;
    }
    b += pinv.inverse * jump;
    out.path.append_knot(t, b);
  }
  out.path.finish_backward();
  return out;
}

}  // namespace ptrunc
