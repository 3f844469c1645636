#pragma once

// Truncation-inducing bridge process b(t, w1, z) = exp{(1, w1, z) . B(t)} and
// reverse-time CDF models H(t | covs) = exp{(1, covs) . alpha(t)}, both fitted
// with the backward additive recursion.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/linalg.hpp"
#include "ptrunc/step_function.hpp"
#include "ptrunc/survival.hpp"

namespace ptrunc {

/// Floor applied to S_D in inverse-probability-of-censoring denominators.
constexpr double kCensorFloor = 1e-10;
/// Lower clamp for fitted CDF values.
constexpr double kCdfFloor = 1e-10;

enum class WeightMode {
  kTimeVarying,  ///< Delta_i(t) / S_D((x_i ^ t) - q_i) inside the recursion
  kCaseWeight,   ///< Delta_i / S_D(x_i - q_i) held fixed over time
};

/// Covariate blocks that can enter a reverse-time CDF model.
enum class CovariateRole { kW1, kW2, kZ, kU };

namespace detail {

inline double floored_censor_survival(const StepFunction& s_d, double residual, bool& floor_hit) {
  const double s = s_d(residual);
  if (s < kCensorFloor) {
    floor_hit = true;
    return kCensorFloor;
  }
  return s;
}

inline const std::vector<double>& role_block(const ObservedRecord& r, CovariateRole role) {
  switch (role) {
    case CovariateRole::kW1: return r.w1;
    case CovariateRole::kW2: return r.w2;
    case CovariateRole::kZ: return r.z;
    case CovariateRole::kU: return r.u;
  }
  return r.z;
}

inline std::size_t role_dim(const Dataset& data, CovariateRole role) {
  switch (role) {
    case CovariateRole::kW1: return data.d1();
    case CovariateRole::kW2: return data.d2();
    case CovariateRole::kZ: return data.dz();
    case CovariateRole::kU: return data.du();
  }
  return 0;
}

inline void append_design_row(std::vector<double>& out, const ObservedRecord& r, std::span<const CovariateRole> roles) {
  out.push_back(1.0);
  for (auto role : roles) {
    const auto& block = role_block(r, role);
    out.insert(out.end(), block.begin(), block.end());
  }
}

template <class Roles1, class Roles2>
RecursionDesign make_design(const Dataset& data, const Roles1& regressor_roles, const Roles2& instrument_roles) {
  RecursionDesign d;
  d.p = 1;
  d.m = 1;
  for (auto role : regressor_roles) d.p += role_dim(data, role);
  for (auto role : instrument_roles) d.m += role_dim(data, role);
  d.q.reserve(data.size());
  d.x.reserve(data.size());
  for (const auto& r : data.records()) {
    d.q.push_back(r.q);
    d.x.push_back(r.x);
    append_design_row(d.regressors, r, regressor_roles);
    append_design_row(d.instruments, r, instrument_roles);
  }
  return d;
}

struct FitOutcome {
  CoefficientPath path;
  Flags flags;
};

inline FitOutcome fit_with_ipcw(const Dataset& data, const RecursionDesign& design, const StepFunction& s_d,
                                WeightMode mode, double rel_tol, std::span<const double> case_weights) {
  const auto cw = unit_or(case_weights, data.size());
  bool floor_hit = false;
  RecursionResult res;
  if (mode == WeightMode::kCaseWeight) {
    std::vector<double> fixed(data.size(), 0.0);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& r = data[i];
      if (r.delta == 1) fixed[i] = cw[i] / floored_censor_survival(s_d, r.x - r.q, floor_hit);
    }
    res = backward_additive_fit(design, data.tau_q(), [&](std::size_t i, double) { return fixed[i]; }, rel_tol);
  } else {
    // On the risk set t < x_i, so Delta_i(t) = 1 and (x_i ^ t) - q_i = t - q_i.
    res = backward_additive_fit(
        design, data.tau_q(),
        [&](std::size_t i, double t) {
          if (cw[i] == 0.0) return 0.0;
          return cw[i] / floored_censor_survival(s_d, t - design.q[i], floor_hit);
        },
        rel_tol);
  }
  if (floor_hit) res.flags.set(Flag::kCensorWeightFloorHit);
  return {std::move(res.path), res.flags};
}

}  // namespace detail

/// Literal time-varying IPCW weight Delta_i(t) 1(q_i <= t < x_i) / S_D((x_i ^ t) - q_i),
/// with Delta_i(t) = 1({delta_i = 1} or {delta_i = 0, t < x_i}).
inline double ipcw_time_varying(const ObservedRecord& r, double t, const StepFunction& s_d) {
  const bool delta_t = r.delta == 1 || t < r.x;
  if (!delta_t || !(r.q <= t && t < r.x)) return 0.0;
  return 1.0 / std::max(s_d(std::min(r.x, t) - r.q), kCensorFloor);
}

struct BridgePath {
  CoefficientPath path;     ///< over regressors (1, W1, Z)
  StepFunction censor_curve;
  Flags flags;
  std::size_t d1 = 0;
  std::size_t dz = 0;

  double tau() const { return path.tau(); }
};

/// Fits B(t) with instruments (1, W2, Z) and regressors (1, W1, Z).
inline BridgePath fit_bridge(const Dataset& data, const StepFunction& s_d, WeightMode mode = WeightMode::kTimeVarying,
                             double rel_tol = kDefaultRelTol, std::span<const double> case_weights = {}) {
  static constexpr CovariateRole kRegressors[] = {CovariateRole::kW1, CovariateRole::kZ};
  static constexpr CovariateRole kInstruments[] = {CovariateRole::kW2, CovariateRole::kZ};
  const auto design = detail::make_design(data, kRegressors, kInstruments);
  auto fit = detail::fit_with_ipcw(data, design, s_d, mode, rel_tol, case_weights);
  return BridgePath{std::move(fit.path), s_d, fit.flags, data.d1(), data.dz()};
}

/// b(t, w1, z) = exp{(1, w1, z) . B(t)}; exactly 1 for t >= tau.
inline double evaluate_bridge(const BridgePath& bp, double t, std::span<const double> w1, std::span<const double> z) {
  if (w1.size() != bp.d1 || z.size() != bp.dz) throw Error(ErrorCode::kDimensionMismatch, "bridge covariate dimensions");
  const double* b = bp.path.at(t);
  if (!b) return 1.0;
  double lp = b[0];
  for (std::size_t j = 0; j < w1.size(); ++j) lp += w1[j] * b[1 + j];
  for (std::size_t j = 0; j < z.size(); ++j) lp += z[j] * b[1 + w1.size() + j];
  return std::exp(std::clamp(lp, -kLinearPredictorBound, kLinearPredictorBound));
}

struct ReverseCdfPath {
  CoefficientPath path;  ///< alpha(t) over (1, covs)
  std::vector<CovariateRole> roles;
  Flags flags;
  std::size_t covariate_dim = 0;

  /// Concatenation of the record's role blocks in model order.
  std::vector<double> covariates(const ObservedRecord& r) const {
    std::vector<double> c;
    for (auto role : roles) {
      const auto& block = detail::role_block(r, role);
      c.insert(c.end(), block.begin(), block.end());
    }
    return c;
  }
};

/// Reverse-time additive CDF model for Q given the selected covariates; same
/// recursion as the bridge with instruments = regressors = (1, covs), so
/// alpha(t) = -B(t).
inline ReverseCdfPath fit_reverse_cdf(const Dataset& data, std::span<const CovariateRole> roles, const StepFunction& s_d,
                                      WeightMode mode = WeightMode::kTimeVarying, double rel_tol = kDefaultRelTol,
                                      std::span<const double> case_weights = {}) {
  std::size_t dim = 0;
  for (auto role : roles) {
    if (role == CovariateRole::kU && data.du() == 0) {
      throw Error(ErrorCode::kInvalidArgument, "latent U requested but the dataset carries none");
    }
    dim += detail::role_dim(data, role);
  }
  const auto design = detail::make_design(data, roles, roles);
  auto fit = detail::fit_with_ipcw(data, design, s_d, mode, rel_tol, case_weights);
  return ReverseCdfPath{fit.path.negated(), {roles.begin(), roles.end()}, fit.flags, dim};
}

/// exp{(1, covs) . alpha(t)} clamped to [kCdfFloor, 1]; clamping sets a flag.
inline double evaluate_cdf(const ReverseCdfPath& rp, double t, std::span<const double> covs, Flags* flags = nullptr) {
  if (covs.size() != rp.covariate_dim) throw Error(ErrorCode::kDimensionMismatch, "CDF covariate dimensions");
  const double* a = rp.path.at(t);
  if (!a) return 1.0;
  double lp = a[0];
  for (std::size_t j = 0; j < covs.size(); ++j) lp += covs[j] * a[1 + j];
  const double h = std::exp(std::clamp(lp, -kLinearPredictorBound, kLinearPredictorBound));
  if (h > 1.0) {
    if (flags) flags->set(Flag::kCdfClampedAboveOne);
    return 1.0;
  }
  if (h < kCdfFloor) {
    if (flags) flags->set(Flag::kCdfFloorHit);
    return kCdfFloor;
  }
  return h;
}

}  // namespace ptrunc
