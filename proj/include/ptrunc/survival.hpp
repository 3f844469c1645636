#pragma once

// Classical estimators for left-truncated right-censored data: Kaplan-Meier for
// the residual censoring time, the truncation product-limit estimator, naive
// KM / mean, and the conditional Kendall's tau test for quasi-independence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/step_function.hpp"

namespace ptrunc {

namespace detail {

inline std::vector<double> unit_or(std::span<const double> weights, std::size_t n) {
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) throw Error(ErrorCode::kDimensionMismatch, "case weights length differs from dataset size");
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "case weights must be finite and nonnegative");
  }
  return {weights.begin(), weights.end()};
}

struct ProductLimitResult {
  StepFunction curve;
  bool empty_risk_set = false;
};

// Weighted product-limit over subjects at risk on [entry_i, exit_i]. Subjects
// exiting at t without an event are still at risk at t (events precede
// censorings at tied times).
inline ProductLimitResult product_limit(std::span<const double> entry, std::span<const double> exit,
                                        std::span<const std::uint8_t> event, std::span<const double> weight) {
  const std::size_t n = exit.size();
  std::vector<std::size_t> by_exit(n), by_entry(n);
  std::iota(by_exit.begin(), by_exit.end(), 0);
  std::iota(by_entry.begin(), by_entry.end(), 0);
  std::sort(by_exit.begin(), by_exit.end(), [&](auto a, auto b) { return exit[a] < exit[b]; });
  std::sort(by_entry.begin(), by_entry.end(), [&](auto a, auto b) { return entry[a] < entry[b]; });

  std::vector<double> knots, values;
  double s = 1.0;
  double entered = 0.0, exited = 0.0;  // weight with entry <= t, weight with exit < t
  std::size_t ie = 0, ix = 0;
  bool empty = false;
  for (std::size_t k = 0; k < n;) {
    const double t = exit[by_exit[k]];
    double deaths = 0.0;
    bool has_event = false;
    std::size_t j = k;
    for (; j < n && exit[by_exit[j]] == t; ++j) {
      const auto i = by_exit[j];
      if (event[i]) {
        deaths += weight[i];
        has_event = true;
      }
    }
    while (ie < n && entry[by_entry[ie]] <= t) entered += weight[by_entry[ie++]];
    while (ix < k) exited += weight[by_exit[ix++]];
    const double at_risk = entered - exited;
    if (has_event) {
      if (at_risk <= 0.0 || deaths <= 0.0) {
        empty = empty || at_risk <= 0.0;
      } else {
        s *= std::max(0.0, 1.0 - std::min(1.0, deaths / at_risk));
        knots.push_back(t);
        values.push_back(s);
      }
    }
    k = j;
  }
  return {StepFunction(std::move(knots), std::move(values), 1.0, Continuity::kRight), empty};
}

}  // namespace detail

/// Weighted Kaplan-Meier estimate of S_D(t) = P(D > t) for the residual
/// censoring time D = C - Q. On the residual scale the "event" is a censoring,
/// so the indicator is 1 - delta and the censoring variable is T - Q.
inline StepFunction km_residual_survival(const Dataset& data, std::span<const double> case_weights = {}) {
  const std::size_t n = data.size();
  const auto w = detail::unit_or(case_weights, n);
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) throw Error(ErrorCode::kAllWeightsZero, "all case weights are zero");
  std::vector<double> entry(n, 0.0), exit(n);
  std::vector<std::uint8_t> event(n);
  for (std::size_t i = 0; i < n; ++i) {
    exit[i] = data[i].x - data[i].q;
    event[i] = data[i].delta == 0 ? 1 : 0;
  }
  return detail::product_limit(entry, exit, event, w).curve;
}

struct CurveResult {
  StepFunction curve;
  Flags flags;
};

/// Product-limit estimator under random left truncation and right censoring;
/// the risk set at t is {i : q_i <= t <= x_i}. The curve is conditional on
/// survival to min_i q_i.
inline CurveResult product_limit_truncation(const Dataset& data, std::span<const double> case_weights = {}) {
  const std::size_t n = data.size();
  const auto w = detail::unit_or(case_weights, n);
  std::vector<double> entry(n), exit(n);
  std::vector<std::uint8_t> event(n);
  for (std::size_t i = 0; i < n; ++i) {
    entry[i] = data[i].q;
    exit[i] = data[i].x;
    event[i] = static_cast<std::uint8_t>(data[i].delta);
  }
  auto res = detail::product_limit(entry, exit, event, w);
  CurveResult out{std::move(res.curve), {}};
  if (res.empty_risk_set) out.flags.set(Flag::kEmptyRiskSet);
  return out;
}

/// Kaplan-Meier on (x, delta) ignoring left truncation.
inline StepFunction km_ignore_truncation(const Dataset& data, std::span<const double> case_weights = {}) {
  const std::size_t n = data.size();
  const auto w = detail::unit_or(case_weights, n);
  std::vector<double> entry(n, -1.0), exit(n);
  std::vector<std::uint8_t> event(n);
  for (std::size_t i = 0; i < n; ++i) {
    exit[i] = data[i].x;
    event[i] = static_cast<std::uint8_t>(data[i].delta);
  }
  return detail::product_limit(entry, exit, event, w).curve;
}

/// Average of nu(x_i), ignoring both truncation and censoring.
inline double naive_mean(const Dataset& data, const EstimandSpec& nu, std::span<const double> case_weights = {}) {
  const auto w = detail::unit_or(case_weights, data.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    num += w[i] * nu.value(data[i].x);
    den += w[i];
  }
  if (den <= 0.0) throw Error(ErrorCode::kZeroDenominator, "all case weights are zero");
  return num / den;
}

struct KendallResult {
  double tau_c = 0.0;
  std::size_t n_comparable = 0;
  double statistic = 0.0;  ///< sum of concordance signs over comparable pairs
  double variance = 0.0;
  double z_score = 0.0;
  double p_value = 1.0;
};

/// Conditional Kendall's tau for quasi-independence of entry and event times.
///
/// A pair is comparable when max(q_i, q_j) <= min(x_i, x_j), the follow-up
/// times differ, and the subject with the smaller follow-up had an event (so
/// the event-time order is known). The statistic sums sign((q_i - q_j)(x_i - x_j))
/// over comparable pairs. Under quasi-independence the entry-time rank of the
/// failing subject within each risk set {j : q_j <= x_k < x_j} is uniform,
/// giving variance sum_k (r_k^2 - 1) / 3 with r_k the risk set size including k.
inline KendallResult kendall_tau_test(const Dataset& data) {
  const std::size_t n = data.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "Kendall test needs at least two records");
  KendallResult out;
  double statistic = 0.0, variance = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& a = data[k];
    if (a.delta != 1) continue;
    double sum_sign = 0.0;
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& b = data[j];
      if (j == k || !(b.q <= a.x && a.x < b.x)) continue;
      ++r;
      // Subject k fails first, so the pair sign is -sign(q_k - q_j).
      sum_sign -= (a.q > b.q) - (a.q < b.q);
    }
    out.n_comparable += r - 1;
    statistic += sum_sign;
    variance += (static_cast<double>(r) * static_cast<double>(r) - 1.0) / 3.0;
  }
  if (out.n_comparable == 0) throw Error(ErrorCode::kNoComparablePairs, "no comparable pairs");
  out.statistic = statistic;
  out.variance = variance;
  out.tau_c = statistic / static_cast<double>(out.n_comparable);
  out.z_score = variance > 0.0 ? statistic / std::sqrt(variance) : 0.0;
  out.p_value = std::erfc(std::abs(out.z_score) / std::sqrt(2.0));
  return out;
}

}  // namespace ptrunc
