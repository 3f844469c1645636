#pragma once

// Final estimators of theta = E{nu(T*)}: proximal bridge weighting (PQB),
// inverse probability of truncation weighting (IPQW) and its variants, and the
// classical product-limit / Kaplan-Meier / naive comparators.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptrunc/bridge.hpp"
#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/survival.hpp"

namespace ptrunc {

enum class Method { kPqb, kPqbCw, kIpqw, kIpqwCw, kIpqwU, kIpqwUCw, kIpqwOracle, kPl, kKm, kNaive };

inline constexpr Method kAllMethods[] = {Method::kPqb,   Method::kIpqw,    Method::kPqbCw,      Method::kIpqwCw,
                                         Method::kPl,    Method::kKm,      Method::kNaive,      Method::kIpqwU,
                                         Method::kIpqwUCw, Method::kIpqwOracle};

constexpr std::string_view method_name(Method m) {
  switch (m) {
    case Method::kPqb: return "PQB";
    case Method::kPqbCw: return "PQB-cw";
    case Method::kIpqw: return "IPQW";
    case Method::kIpqwCw: return "IPQW-cw";
    case Method::kIpqwU: return "IPQW-U";
    case Method::kIpqwUCw: return "IPQW-U-cw";
    case Method::kIpqwOracle: return "IPQW-o";
    case Method::kPl: return "PL";
    case Method::kKm: return "KM";
    case Method::kNaive: return "naive";
  }
  return "?";
}

inline Method parse_method(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto m : kAllMethods) {
    std::string candidate(method_name(m));
    std::transform(candidate.begin(), candidate.end(), candidate.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (candidate == name) return m;
    std::erase(candidate, '-');
    if (candidate == name) return m;
  }
  throw Error(ErrorCode::kConfig, "unknown method '" + name + "'");
}

/// Methods that need the latent U column (simulation only).
constexpr bool needs_latent(Method m) {
  return m == Method::kIpqwU || m == Method::kIpqwUCw || m == Method::kIpqwOracle;
}

struct AdjustedRecord {
  double x_tilde = 0.0;
  int delta_tilde = 0;
};

/// x~ = min(x, t0 v tau_q); delta~ = 1 if uncensored or censored after t0 v tau_q.
inline std::vector<AdjustedRecord> adjusted_view(const Dataset& data, double t0) {
  if (!(t0 > 0.0)) throw Error(ErrorCode::kInvalidArgument, "t0 must be positive");
  const double horizon = std::max(t0, data.tau_q());
  std::vector<AdjustedRecord> out;
  out.reserve(data.size());
  for (const auto& r : data.records()) {
    out.push_back({std::min(r.x, horizon), (r.delta == 1 || horizon < r.x) ? 1 : 0});
  }
  return out;
}

struct WeightSummary {
  double min = 0.0;
  double max = 0.0;
  double ess = 0.0;  ///< (sum w)^2 / sum w^2 over contributing records
};

struct Estimate {
  Method method = Method::kPqb;
  EstimandSpec estimand;
  double theta_hat = 0.0;
  std::size_t n_used = 0;
  WeightSummary weights;
  Flags flags;
  std::optional<double> se;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::size_t bootstrap_replications = 0;
  std::size_t bootstrap_failed = 0;
};

/// True nuisance functions for the oracle IPQW "estimator" in simulations.
struct OracleNuisance {
  std::function<double(double)> censor_survival;                          ///< S_D(d)
  std::function<double(double, const ObservedRecord&)> truncation_cdf;    ///< G(t | z, u)
};

struct EstimatorSpec {
  Method method = Method::kPqb;
  EstimandSpec estimand;
  double rel_tol = kDefaultRelTol;
  std::shared_ptr<const OracleNuisance> oracle;
};

namespace detail {

struct RatioAccumulator {
  double num = 0.0, den = 0.0, sum_sq = 0.0;
  double wmin = std::numeric_limits<double>::infinity(), wmax = 0.0;
  std::size_t used = 0;

  void add(double w, double v) {
    if (!(w > 0.0)) return;
    num += w * v;
    den += w;
    sum_sq += w * w;
    wmin = std::min(wmin, w);
    wmax = std::max(wmax, w);
    ++used;
  }

  Estimate finish(Method method, const EstimandSpec& nu, Flags flags) const {
    if (!(den > 0.0) || !std::isfinite(den)) throw Error(ErrorCode::kZeroDenominator, "all estimator weights are zero");
    Estimate e;
    e.method = method;
    e.estimand = nu;
    e.theta_hat = std::clamp(num / den, 0.0, nu.upper_bound());
    e.n_used = used;
    e.weights = {wmin, wmax, den * den / sum_sq};
    e.flags = flags;
    return e;
  }
};

}  // namespace detail

/// IPCW ratio estimator sum w_i nu_i / sum w_i with w_i = c_i a_i / S_D(t_i - q_i),
/// where a_i = truncation_weight(record, t_i) (the bridge, or 1/H).
///
/// Adjusted form: t_i = x~_i over records with delta~_i = 1; a subject followed
/// past the horizon t0 v tau_q contributes nu(T) as known beyond the horizon.
/// Unadjusted form: t_i = x_i over uncensored records.
template <class TruncationWeight, class CensorSurvival>
Estimate ipcw_ratio(Method method, const Dataset& data, const EstimandSpec& nu, TruncationWeight&& truncation_weight,
                    CensorSurvival&& censor_survival, bool adjusted, std::span<const double> case_weights = {},
                    Flags flags = {}) {
  check_estimand(data, nu);
  const auto cw = detail::unit_or(case_weights, data.size());
  detail::RatioAccumulator acc;
  const double horizon = std::max(nu.t0, data.tau_q());
  const auto view = adjusted_view(data, nu.t0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data[i];
    if (cw[i] == 0.0) continue;
    double t = r.x;
    double value = 0.0;
    if (adjusted) {
      if (view[i].delta_tilde == 0) continue;
      t = view[i].x_tilde;
      value = r.x > horizon ? nu.value_beyond(horizon) : nu.value(r.x);
    } else {
      if (r.delta == 0) continue;
      value = nu.value(r.x);
    }
    double s = censor_survival(t - r.q);
    if (s < kCensorFloor) {
      s = kCensorFloor;
      flags.set(Flag::kCensorWeightFloorHit);
    }
    acc.add(cw[i] * truncation_weight(r, t) / s, value);
  }
  return acc.finish(method, nu, flags);
}

/// PQB: bridge-weighted IPCW ratio. Time-varying mode uses the adjusted IPCW
/// form; case-weight mode (PQB-cw) uses Delta_i / S_D(x_i - q_i) throughout.
inline Estimate estimate_pqb(const Dataset& data, const EstimandSpec& nu, WeightMode mode = WeightMode::kTimeVarying,
                             double rel_tol = kDefaultRelTol, std::span<const double> case_weights = {}) {
  const auto s_d = km_residual_survival(data, case_weights);
  const auto bridge = fit_bridge(data, s_d, mode, rel_tol, case_weights);
  const Method method = mode == WeightMode::kTimeVarying ? Method::kPqb : Method::kPqbCw;
  return ipcw_ratio(
      method, data, nu, [&](const ObservedRecord& r, double t) { return evaluate_bridge(bridge, t, r.w1, r.z); },
      [&](double d) { return s_d(d); }, mode == WeightMode::kTimeVarying, case_weights, bridge.flags);
}

/// IPQW with weights 1 / H^(x | covariates) from a reverse-time CDF fit on `roles`.
inline Estimate estimate_ipqw(const Dataset& data, const EstimandSpec& nu, std::span<const CovariateRole> roles,
                              WeightMode mode = WeightMode::kTimeVarying, double rel_tol = kDefaultRelTol,
                              std::span<const double> case_weights = {}, Method method = Method::kIpqw) {
  const auto s_d = km_residual_survival(data, case_weights);
  const auto cdf = fit_reverse_cdf(data, roles, s_d, mode, rel_tol, case_weights);
  Flags flags = cdf.flags;
  return ipcw_ratio(
      method, data, nu,
      [&](const ObservedRecord& r, double t) { return 1.0 / evaluate_cdf(cdf, t, cdf.covariates(r), &flags); },
      [&](double d) { return s_d(d); }, mode == WeightMode::kTimeVarying, case_weights, flags);
}

/// IPQW with the true G(t | z, u) and S_D (simulation benchmark).
inline Estimate estimate_ipqw_oracle(const Dataset& data, const EstimandSpec& nu, const OracleNuisance& oracle,
                                     std::span<const double> case_weights = {}) {
  return ipcw_ratio(
      Method::kIpqwOracle, data, nu,
      [&](const ObservedRecord& r, double t) { return 1.0 / std::max(oracle.truncation_cdf(t, r), kCdfFloor); },
      oracle.censor_survival, true, case_weights);
}

/// PL, KM or naive functional at t0: the curve value for survival
/// probabilities, its integral over [0, t0] for RMST.
inline Estimate estimate_classical(const Dataset& data, const EstimandSpec& nu, Method method,
                                   std::span<const double> case_weights = {}) {
  Estimate e;
  e.method = method;
  e.estimand = nu;
  e.n_used = data.size();
  if (method == Method::kNaive) {
    e.theta_hat = naive_mean(data, nu, case_weights);
    return e;
  }
  StepFunction curve;
  if (method == Method::kPl) {
    auto res = product_limit_truncation(data, case_weights);
    curve = std::move(res.curve);
    e.flags = res.flags;
    double min_q = data[0].q;
    for (const auto& r : data.records()) min_q = std::min(min_q, r.q);
    if (nu.t0 < min_q) e.flags.set(Flag::kCurveUndefinedAt);
  } else if (method == Method::kKm) {
    curve = km_ignore_truncation(data, case_weights);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "estimate_classical supports PL, KM and naive only");
  }
  e.theta_hat = nu.kind == EstimandKind::kSurvProb ? curve(nu.t0) : curve.integrate(0.0, nu.t0);
  return e;
}

/// Runs any roster method with optional case weights injected at every stage.
inline Estimate run_estimator(const Dataset& data, const EstimatorSpec& spec, std::span<const double> case_weights = {}) {
  static constexpr CovariateRole kObservedRoles[] = {CovariateRole::kW1, CovariateRole::kW2, CovariateRole::kZ};
  static constexpr CovariateRole kLatentRoles[] = {CovariateRole::kZ, CovariateRole::kU};
  const auto& nu = spec.estimand;
  switch (spec.method) {
    case Method::kPqb: return estimate_pqb(data, nu, WeightMode::kTimeVarying, spec.rel_tol, case_weights);
    case Method::kPqbCw: return estimate_pqb(data, nu, WeightMode::kCaseWeight, spec.rel_tol, case_weights);
    case Method::kIpqw:
      return estimate_ipqw(data, nu, kObservedRoles, WeightMode::kTimeVarying, spec.rel_tol, case_weights, Method::kIpqw);
    case Method::kIpqwCw:
      return estimate_ipqw(data, nu, kObservedRoles, WeightMode::kCaseWeight, spec.rel_tol, case_weights, Method::kIpqwCw);
    case Method::kIpqwU:
      return estimate_ipqw(data, nu, kLatentRoles, WeightMode::kTimeVarying, spec.rel_tol, case_weights, Method::kIpqwU);
    case Method::kIpqwUCw:
      return estimate_ipqw(data, nu, kLatentRoles, WeightMode::kCaseWeight, spec.rel_tol, case_weights, Method::kIpqwUCw);
    case Method::kIpqwOracle:
      if (!spec.oracle) throw Error(ErrorCode::kInvalidArgument, "IPQW-o needs the true nuisance functions");
      return estimate_ipqw_oracle(data, nu, *spec.oracle, case_weights);
    case Method::kPl:
    case Method::kKm:
    case Method::kNaive: return estimate_classical(data, nu, spec.method, case_weights);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown method");
}

}  // namespace ptrunc
