#pragma once

#include <algorithm>
#include <cstddef>
#include <ostream>
#include <vector>

#include "ptrunc/error.hpp"

namespace ptrunc {

enum class Continuity { kLeft, kRight };

/// Piecewise-constant function of time. With right continuity the value at a
/// knot is the value after the jump; with left continuity it is the value
/// before it.
class StepFunction {
 public:
  StepFunction() = default;

  StepFunction(std::vector<double> knots, std::vector<double> values, double value_before_first,
               Continuity continuity = Continuity::kRight)
      : knots_(std::move(knots)), values_(std::move(values)), before_(value_before_first), continuity_(continuity) {
    if (knots_.size() != values_.size()) throw Error(ErrorCode::kDimensionMismatch, "knots and values differ in length");
    for (std::size_t k = 1; k < knots_.size(); ++k) {
      if (!(knots_[k - 1] < knots_[k])) throw Error(ErrorCode::kInvalidArgument, "step function knots must increase");
    }
  }

  static StepFunction constant(double v) { return StepFunction({}, {}, v); }

  double operator()(double t) const {
    // Number of knots at or before t (right) or strictly before t (left).
    const auto it = continuity_ == Continuity::kRight ? std::upper_bound(knots_.begin(), knots_.end(), t)
                                                      : std::lower_bound(knots_.begin(), knots_.end(), t);
    const auto k = static_cast<std::size_t>(it - knots_.begin());
    return k == 0 ? before_ : values_[k - 1];
  }

  /// Integral over [a, b], a <= b.
  double integrate(double a, double b) const {
    if (b <= a) return 0.0;
    double total = 0.0;
    double left = a;
    double current = (*this)(a);
    auto it = std::upper_bound(knots_.begin(), knots_.end(), a);
    for (; it != knots_.end() && *it < b; ++it) {
      total += current * (*it - left);
      left = *it;
      current = values_[static_cast<std::size_t>(it - knots_.begin())];
    }
    total += current * (b - left);
    return total;
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }
  double value_before_first() const { return before_; }
  Continuity continuity() const { return continuity_; }

  /// Starts at 1, nonincreasing, values in [0, 1].
  bool is_survival_shaped() const {
    if (before_ != 1.0) return false;
    double prev = 1.0;
    for (double v : values_) {
      if (v > prev || v < 0.0 || v > 1.0) return false;
      prev = v;
    }
    return true;
  }

  /// Two-column CSV: the starting value at time 0 (or the first knot if
  /// earlier), then one row per knot.
  void write_csv(std::ostream& out) const {
    out << "time,value\n";
    const double start = knots_.empty() ? 0.0 : std::min(0.0, knots_.front());
    if (knots_.empty() || knots_.front() > start) out << start << ',' << before_ << '\n';
    for (std::size_t k = 0; k < knots_.size(); ++k) out << knots_[k] << ',' << values_[k] << '\n';
  }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
  double before_ = 1.0;
  Continuity continuity_ = Continuity::kRight;
};

}  // namespace ptrunc
