#pragma once

// Random-weighting bootstrap: each replicate re-runs the whole estimator with
// normalized Exp(1) multiplier weights injected into every stage.

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/estimators.hpp"

namespace ptrunc {

/// SplitMix64 finalizer, used both as a seed mixer and as a counter-based generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform on (0, 1) from the counter-th output of stream `key`.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(key ^ splitmix64(counter));
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// w_i = e_i / sum e_i with e_i ~ Exp(1) by inverse CDF on counter-based uniforms.
inline std::vector<double> draw_weights(std::size_t n, std::uint64_t key) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "draw_weights needs n >= 1");
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = -std::log(counter_uniform(key, i));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Runs body(k) for k in [0, count) on up to `threads` workers. Each index is
/// processed exactly once; callers write results by index, so output does not
/// depend on scheduling. The first exception is rethrown after all workers join.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t k; !failed.load() && (k = next.fetch_add(1)) < count;) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

struct BootstrapConfig {
  std::size_t replications = 200;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double ci_level = 0.95;
  double max_failure_fraction = 0.2;
};

struct BootstrapResult {
  double theta_hat = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> replicate_estimates;  ///< NaN marks a failed replicate
  std::size_t n_failed = 0;
};

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal_distribution<double>(), p); }

/// Weight source for replicate r: returns the n multiplier weights.
using WeightSource = std::function<std::vector<double>(std::size_t replicate, std::size_t n)>;

inline WeightSource exponential_weights(std::uint64_t seed) {
  return [seed](std::size_t r, std::size_t n) { return draw_weights(n, derive_seed(seed, r)); };
}

/// Generic random-weighting bootstrap around `fit(weights) -> theta`. Replicates
/// throwing ZeroDenominator or AllWeightsZero are dropped and counted.
template <class Fit>
BootstrapResult bootstrap_with(std::size_t n, double theta_hat, Fit&& fit, const BootstrapConfig& cfg,
                               const WeightSource& weights) {
  if (cfg.replications < 2) throw Error(ErrorCode::kInvalidArgument, "bootstrap needs at least two replications");
  if (!(cfg.ci_level > 0.0 && cfg.ci_level < 1.0)) throw Error(ErrorCode::kInvalidArgument, "ci_level must be in (0, 1)");
  BootstrapResult out;
  out.theta_hat = theta_hat;
  out.replicate_estimates.assign(cfg.replications, std::numeric_limits<double>::quiet_NaN());
  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    const auto w = weights(r, n);
    try {
      out.replicate_estimates[r] = fit(std::span<const double>(w));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kZeroDenominator && e.code() != ErrorCode::kAllWeightsZero) throw;
    }
  });
  // Aggregate in index order so the result is independent of scheduling.
  double sum = 0.0;
  std::size_t ok = 0;
  for (double v : out.replicate_estimates) {
    if (std::isnan(v)) {
      ++out.n_failed;
    } else {
      sum += v;
      ++ok;
    }
  }
  if (static_cast<double>(out.n_failed) > cfg.max_failure_fraction * static_cast<double>(cfg.replications) || ok < 2) {
    throw Error(ErrorCode::kTooManyFailures,
                std::to_string(out.n_failed) + " of " + std::to_string(cfg.replications) + " bootstrap replicates failed");
  }
  const double mean = sum / static_cast<double>(ok);
  double ss = 0.0;
  for (double v : out.replicate_estimates) {
    if (!std::isnan(v)) ss += (v - mean) * (v - mean);
  }
  out.se = std::sqrt(ss / static_cast<double>(ok - 1));
  const double z = normal_quantile(0.5 + cfg.ci_level / 2.0);
  out.ci_low = theta_hat - z * out.se;
  out.ci_high = theta_hat + z * out.se;
  return out;
}

/// Bootstrap of a roster estimator; weights multiply into S_D, the recursion
/// and the final ratio. tau_q stays at its full-sample value.
inline BootstrapResult bootstrap_estimate(const Dataset& data, const EstimatorSpec& spec, const BootstrapConfig& cfg,
                                          std::optional<double> theta_hat = std::nullopt,
                                          const WeightSource& weights = {}) {
  const double point = theta_hat ? *theta_hat : run_estimator(data, spec).theta_hat;
  return bootstrap_with(
      data.size(), point, [&](std::span<const double> w) { return run_estimator(data, spec, w).theta_hat; }, cfg,
      weights ? weights : exponential_weights(cfg.seed));
}

/// Point estimate with bootstrap SE and Wald interval attached.
inline Estimate estimate_with_bootstrap(const Dataset& data, const EstimatorSpec& spec, const BootstrapConfig& cfg) {
  auto est = run_estimator(data, spec);
  const auto boot = bootstrap_estimate(data, spec, cfg, est.theta_hat);
  est.se = boot.se;
  est.ci_low = boot.ci_low;
  est.ci_high = boot.ci_high;
  est.bootstrap_replications = cfg.replications;
  est.bootstrap_failed = boot.n_failed;
  return est;
}

}  // namespace ptrunc
