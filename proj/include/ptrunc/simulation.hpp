#pragma once

// Simulation family with latent confounding of entry and event times, its
// closed-form nuisance functions and bridge, a finite-state exact oracle, and
// the Monte Carlo study runner.

#include <array>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "ptrunc/bootstrap.hpp"
#include "ptrunc/bridge.hpp"
#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/estimators.hpp"
#include "ptrunc/linalg.hpp"

namespace ptrunc {

/// Latents Z, U ~ max{N(mu, sd^2), 0}; proxies linear in (Z, U) plus Gaussian
/// noise; T | Z, U exponential; Q = max(tau - E, 0) with E | Z, U exponential;
/// residual censoring D ~ Weibull.
struct DgmParams {
  double latent_mean = 0.6;
  double latent_sd = 0.45;

  double w1_intercept = 1.4, w1_z = 0.3, w1_u = -0.9, w1_sd = 0.25;
  double w2_intercept = 0.6, w2_z = -0.2, w2_u = 0.5, w2_sd = 0.25;

  double hazard_0 = 0.25, hazard_z = 0.3, hazard_u = 0.6;
  double reverse_0 = 0.1, reverse_z = 0.25, reverse_u = 1.0;

  double censor_shape = 2.0;
  double censor_scale = 2.0;  ///< +inf disables censoring

  double tau_q_sim = 2.0;
  bool entry_at_zero = false;  ///< Q* = 0 for everyone (no truncation)

  double event_rate(double z, double u) const { return hazard_0 + hazard_z * z + hazard_u * u; }
  double reverse_rate(double z, double u) const { return reverse_0 + reverse_z * z + reverse_u * u; }

  /// G(t | z, u) = P(Q* <= t | z, u).
  double truncation_cdf(double t, double z, double u) const {
    if (entry_at_zero || t >= tau_q_sim) return t >= 0.0 ? 1.0 : 0.0;
    if (t < 0.0) return 0.0;
    return std::exp(-reverse_rate(z, u) * (tau_q_sim - t));
  }

  /// S_D(d) = P(D > d).
  double censor_survival(double d) const {
    if (std::isinf(censor_scale)) return 1.0;
    if (d <= 0.0) return 1.0;
    return std::exp(-std::pow(d / censor_scale, censor_shape));
  }
};

/// Explicit transforms on mt19937_64 output so draws do not depend on the
/// standard library's distribution implementations.
class SimRng {
 public:
  explicit SimRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on (0, 1) with 53 random bits.
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  /// Box-Muller; one normal per pair of uniforms.
  double normal(double mean = 0.0, double sd = 1.0) {
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    return mean + sd * r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double weibull(double shape, double scale) { return scale * std::pow(-std::log(uniform()), 1.0 / shape); }

 private:
  std::mt19937_64 engine_;
};

struct GeneratedData {
  Dataset data;
  std::size_t generated = 0;         ///< full-data draws needed
  double truncation_fraction = 0.0;  ///< share of draws with Q* >= T*
  double censoring_fraction = 0.0;   ///< share of retained subjects with delta = 0
};

namespace detail {

struct FullDataDraw {
  double z, u, w1, w2, t, q, d;
};

inline FullDataDraw draw_full(SimRng& rng, const DgmParams& p) {
  FullDataDraw f{};
  f.z = std::max(rng.normal(p.latent_mean, p.latent_sd), 0.0);
  f.u = std::max(rng.normal(p.latent_mean, p.latent_sd), 0.0);
  f.w1 = p.w1_intercept + p.w1_z * f.z + p.w1_u * f.u + rng.normal(0.0, p.w1_sd);
  f.w2 = p.w2_intercept + p.w2_z * f.z + p.w2_u * f.u + rng.normal(0.0, p.w2_sd);
  f.t = rng.exponential(p.event_rate(f.z, f.u));
  const double e = rng.exponential(p.reverse_rate(f.z, f.u));
  f.q = p.entry_at_zero ? 0.0 : std::max(p.tau_q_sim - e, 0.0);
  f.d = std::isinf(p.censor_scale) ? std::numeric_limits<double>::infinity()
                                   : rng.weibull(p.censor_shape, p.censor_scale);
  return f;
}

}  // namespace detail

/// Draws until n_target subjects satisfy Q* < T*. Records carry (W1, W2, Z)
/// and the latent U; the dataset's tau_q is params.tau_q_sim.
inline GeneratedData generate_observed(std::size_t n_target, const DgmParams& params, std::uint64_t seed) {
  if (n_target == 0) throw Error(ErrorCode::kInvalidArgument, "n_target must be at least 1");
  SimRng rng(seed);
  std::vector<ObservedRecord> records;
  records.reserve(n_target);
  std::size_t generated = 0, censored = 0;
  while (records.size() < n_target) {
    const auto f = detail::draw_full(rng, params);
    ++generated;
    if (!(f.q < f.t)) continue;
    const double c = f.q + f.d;
    ObservedRecord r;
    r.q = f.q;
    r.x = std::min(f.t, c);
    r.delta = f.t < c ? 1 : 0;
    r.w1 = {f.w1};
    r.w2 = {f.w2};
    r.z = {f.z};
    r.u = {f.u};
    censored += r.delta == 0;
    records.push_back(std::move(r));
  }
  const double tau = params.entry_at_zero ? 0.0 : params.tau_q_sim;
  GeneratedData out{Dataset(std::move(records), std::max(tau, 0.0)), generated, 0.0, 0.0};
  out.truncation_fraction = 1.0 - static_cast<double>(n_target) / static_cast<double>(generated);
  out.censoring_fraction = static_cast<double>(censored) / static_cast<double>(n_target);
  return out;
}

/// Full-data Monte Carlo mean of nu(T*).
inline double true_theta(const DgmParams& params, const EstimandSpec& nu, std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 10000) throw Error(ErrorCode::kInvalidArgument, "n_mc must be at least 1e4");
  SimRng rng(seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) sum += nu.value(detail::draw_full(rng, params).t);
  return sum / static_cast<double>(n_mc);
}

/// E{exp(-a X)} for X = max{N(mu, sd^2), 0}.
inline double censored_normal_laplace(double a, double mu, double sd) {
  const boost::math::normal_distribution<double> std_normal;
  const double at_zero = boost::math::cdf(std_normal, -mu / sd);
  const double tail = std::exp(-a * mu + 0.5 * a * a * sd * sd) * boost::math::cdf(std_normal, (mu - a * sd * sd) / sd);
  return at_zero + tail;
}

/// P(T* > t) in closed form.
inline double true_survival(const DgmParams& p, double t) {
  if (t <= 0.0) return 1.0;
  return std::exp(-p.hazard_0 * t) * censored_normal_laplace(p.hazard_z * t, p.latent_mean, p.latent_sd) *
         censored_normal_laplace(p.hazard_u * t, p.latent_mean, p.latent_sd);
}

/// theta = E{nu(T*)} by closed form (survival probability) or adaptive quadrature (RMST).
inline double true_theta_exact(const DgmParams& p, const EstimandSpec& nu) {
  if (nu.kind == EstimandKind::kSurvProb) return true_survival(p, nu.t0);
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate([&](double t) { return true_survival(p, t); },
                                                                       0.0, nu.t0, 15, 1e-13);
}

/// True nuisances for IPQW-o; records must carry z and u.
inline std::shared_ptr<const OracleNuisance> oracle_nuisance(const DgmParams& p) {
  auto o = std::make_shared<OracleNuisance>();
  o->censor_survival = [p](double d) { return p.censor_survival(d); };
  o->truncation_cdf = [p](double t, const ObservedRecord& r) { return p.truncation_cdf(t, r.z.at(0), r.u.at(0)); };
  return o;
}

/// Closed-form bridge for the Gaussian-additive proxy model: with
/// b(t, w1, z) = exp{B0(t) + B1(t) w1 + Bz(t) z}, matching E{b | Z, U} = 1/G(t | Z, U)
/// gives
///   B1(t) = alpha_u (tau - t) / gamma_u,
///   Bz(t) = alpha_z (tau - t) - gamma_z B1(t),
///   B0(t) = alpha_0 (tau - t) - gamma_0 B1(t) - sigma^2 B1(t)^2 / 2,
/// and B = 0 on [tau, inf).
struct AnalyticBridge {
  DgmParams params;

  Vector coefficients(double t) const {
    Vector b = Vector::Zero(3);
    const auto& p = params;
    if (t >= p.tau_q_sim) return b;
    const double s = p.tau_q_sim - std::max(t, 0.0);
    const double b1 = p.reverse_u * s / p.w1_u;
    b(0) = p.reverse_0 * s - p.w1_intercept * b1 - 0.5 * p.w1_sd * p.w1_sd * b1 * b1;
    b(1) = b1;
    b(2) = p.reverse_z * s - p.w1_z * b1;
    return b;
  }

  double operator()(double t, double w1, double z) const {
    const auto b = coefficients(t);
    return std::exp(b(0) + b(1) * w1 + b(2) * z);
  }
};

inline AnalyticBridge analytic_bridge(const DgmParams& params) { return AnalyticBridge{params}; }

/// Left-continuous step version of the analytic path on `knots` (increasing, below tau).
inline CoefficientPath analytic_bridge_path(const DgmParams& params, std::span<const double> knots) {
  const AnalyticBridge bridge{params};
  CoefficientPath path(3, params.tau_q_sim);
  for (auto it = knots.rbegin(); it != knots.rend(); ++it) path.append_knot(*it, bridge.coefficients(*it));
  path.finish_backward();
  return path;
}

/// PQB with the closed-form bridge substituted for the fitted one.
inline Estimate estimate_pqb_analytic(const Dataset& data, const EstimandSpec& nu, const DgmParams& params) {
  const auto s_d = km_residual_survival(data);
  const AnalyticBridge bridge{params};
  return ipcw_ratio(
      Method::kPqb, data, nu, [&](const ObservedRecord& r, double t) { return bridge(t, r.w1.at(0), r.z.at(0)); },
      [&](double d) { return s_d(d); }, true);
}

// ---------------------------------------------------------------------------
// Finite-state oracle

/// Binary U, W1, W2 (no Z); Q and T on finite grids, conditionally independent
/// given U; W1 and W2 independent of everything else given U.
struct DiscreteModel {
  std::array<double, 2> p_u{0.5, 0.5};
  std::array<double, 2> w1_one_given_u{0.3, 0.7};  ///< P(W1 = 1 | U = u)
  std::array<double, 2> w2_one_given_u{0.2, 0.8};  ///< P(W2 = 1 | U = u)
  std::vector<double> q_support{0.0, 1.0, 2.0};
  std::array<std::vector<double>, 2> q_prob;  ///< P(Q = q_support[j] | U = u)
  std::vector<double> t_support{1.0, 2.0, 3.0, 4.0, 5.0};
  std::array<std::vector<double>, 2> t_prob;
  double tau = 3.0;  ///< bridge support bound, above max Q
};

struct DiscreteOracleResult {
  std::vector<double> bridge_times;            ///< increasing grid times s with a solved bridge
  std::vector<std::array<double, 2>> bridge;   ///< b(s, w1) for w1 = 0, 1
  double theta = 0.0;                          ///< full-data E{nu(T)}
  double ratio = 0.0;                          ///< observed-law E{b(T,W1) nu(T)} / E{b(T,W1)}
  double selection_probability = 0.0;          ///< P(Q < T)

  /// Left-continuous bridge value: b(s) for t in (s_prev, s]; 1 beyond the last solved time.
  double bridge_at(double t, int w1) const {
    const auto it = std::lower_bound(bridge_times.begin(), bridge_times.end(), t);
    if (it == bridge_times.end()) return 1.0;
    return bridge[static_cast<std::size_t>(it - bridge_times.begin())][static_cast<std::size_t>(w1)];
  }
};

/// Solves the observable bridge equations backwards over the Q grid,
///   E{b(s, W1) 1(Q < s) | Q <= s < T, W2 = w2} = E{b(s+, W1) | Q <= s < T, W2 = w2},  w2 = 0, 1,
/// by enumerating the joint law, then evaluates the identification ratio.
inline DiscreteOracleResult discrete_oracle(const DiscreteModel& m, const EstimandSpec& nu) {
  const std::size_t nq = m.q_support.size(), nt = m.t_support.size();
  for (int u = 0; u < 2; ++u) {
    if (m.q_prob[u].size() != nq || m.t_prob[u].size() != nt) {
      throw Error(ErrorCode::kDimensionMismatch, "discrete model probability tables do not match supports");
    }
  }
  auto pw = [](double p_one, int w) { return w == 1 ? p_one : 1.0 - p_one; };
  const double w2_det = m.w2_one_given_u[1] - m.w2_one_given_u[0];
  const double w1_det = m.w1_one_given_u[1] - m.w1_one_given_u[0];
  if (std::abs(w2_det) < 1e-12 || std::abs(w1_det) < 1e-12) {
    throw Error(ErrorCode::kSingularProxyLaw, "proxy law given U is rank deficient");
  }

  DiscreteOracleResult out;
  // Grid times at which the bridge can jump: Q support points in (0, tau) that precede some T.
  std::vector<double> times;
  for (double s : m.q_support) {
    if (s > 0.0 && s < m.tau) times.push_back(s);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::array<double, 2>> values(times.size());

  std::array<double, 2> next{1.0, 1.0};  // b(s+, w1)
  for (std::size_t k = times.size(); k-- > 0;) {
    const double s = times[k];
    // a[w2][w1] = P(W1 = w1, Q < s, Q <= s < T, W2 = w2); c[w2] = sum_w1 b(s+, w1) P(W1 = w1, Q <= s < T, W2 = w2).
    double a[2][2] = {{0, 0}, {0, 0}};
    double c[2] = {0, 0};
    for (int u = 0; u < 2; ++u) {
      double p_before = 0.0, p_at_or_before = 0.0, p_after = 0.0;
      for (std::size_t j = 0; j < nq; ++j) {
        if (m.q_support[j] < s) p_before += m.q_prob[u][j];
        if (m.q_support[j] <= s) p_at_or_before += m.q_prob[u][j];
      }
      for (std::size_t j = 0; j < nt; ++j) {
        if (m.t_support[j] > s) p_after += m.t_prob[u][j];
      }
      for (int w2 = 0; w2 < 2; ++w2) {
        for (int w1 = 0; w1 < 2; ++w1) {
          const double base = m.p_u[u] * pw(m.w1_one_given_u[u], w1) * pw(m.w2_one_given_u[u], w2) * p_after;
          a[w2][w1] += base * p_before;
          c[w2] += base * p_at_or_before * next[w1];
        }
      }
    }
    const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    const double scale = std::max({std::abs(a[0][0]), std::abs(a[0][1]), std::abs(a[1][0]), std::abs(a[1][1])});
    if (!(std::abs(det) > 1e-14 * scale * scale)) {
      throw Error(ErrorCode::kSingularProxyLaw, "bridge system is singular at a grid time");
    }
    values[k][0] = (c[0] * a[1][1] - a[0][1] * c[1]) / det;
    values[k][1] = (a[0][0] * c[1] - c[0] * a[1][0]) / det;
    next = values[k];
  }
  out.bridge_times = times;
  out.bridge = values;

  double theta = 0.0, num = 0.0, den = 0.0, sel = 0.0;
  for (int u = 0; u < 2; ++u) {
    for (std::size_t jt = 0; jt < nt; ++jt) {
      const double t = m.t_support[jt];
      const double pt = m.p_u[u] * m.t_prob[u][jt];
      theta += pt * nu.value(t);
      double p_sel = 0.0;
      for (std::size_t jq = 0; jq < nq; ++jq) {
        if (m.q_support[jq] < t) p_sel += m.q_prob[u][jq];
      }
      sel += pt * p_sel;
      for (int w1 = 0; w1 < 2; ++w1) {
        const double p = pt * p_sel * pw(m.w1_one_given_u[u], w1);
        const double b = out.bridge_at(t, w1);
        num += p * b * nu.value(t);
        den += p * b;
      }
    }
  }
  out.theta = theta;
  out.ratio = num / den;
  out.selection_probability = sel;
  return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo study

struct StudyConfig {
  std::size_t n = 1000;
  std::size_t replications = 200;
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<Method> bootstrap_methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::size_t bootstrap_replications = 100;
  std::uint64_t seed = 20240101;            ///< data seed
  std::uint64_t bootstrap_seed = 20240102;  ///< multiplier-weight seed
  unsigned threads = 1;
  double ci_level = 0.95;
  EstimandSpec estimand{EstimandKind::kSurvProb, 1.0};
  DgmParams params;
  bool keep_replicates = false;
};

struct StudyRow {
  Method method = Method::kPqb;
  double bias = 0.0;
  double sd = 0.0;
  std::optional<double> mean_boot_se;
  std::optional<double> coverage;
  std::size_t n_ok = 0;
  std::size_t n_failed = 0;
  std::size_t n_boot_failed = 0;  ///< replications whose bootstrap failed
};

struct ReplicateRecord {
  double theta_hat = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  bool bootstrap_failed = false;
};

struct StudyReport {
  StudyConfig config;
  double theta_true = 0.0;
  double mean_truncation_fraction = 0.0;
  double mean_censoring_fraction = 0.0;
  std::vector<StudyRow> rows;
  std::vector<std::vector<ReplicateRecord>> replicates;  ///< [method][replication], when kept
};

/// Runs the study; replication r uses data seed derive_seed(seed, r) and
/// bootstrap seed derive_seed(bootstrap_seed, r), shared by all methods.
inline StudyReport run_study(const StudyConfig& cfg) {
  if (cfg.replications == 0) throw Error(ErrorCode::kInvalidArgument, "replications must be at least 1");
  if (cfg.methods.empty()) throw Error(ErrorCode::kInvalidArgument, "study needs at least one method");
  const std::size_t nm = cfg.methods.size();
  const auto oracle = oracle_nuisance(cfg.params);
  StudyReport report;
  report.config = cfg;
  report.theta_true = true_theta_exact(cfg.params, cfg.estimand);

  std::vector<std::vector<ReplicateRecord>> cells(nm, std::vector<ReplicateRecord>(cfg.replications));
  std::vector<double> trunc(cfg.replications), cens(cfg.replications);
  auto wants_boot = [&](Method m) {
    return cfg.bootstrap_replications >= 2 &&
           std::find(cfg.bootstrap_methods.begin(), cfg.bootstrap_methods.end(), m) != cfg.bootstrap_methods.end();
  };

  parallel_for(cfg.replications, cfg.threads, [&](std::size_t r) {
    const auto gen = generate_observed(cfg.n, cfg.params, derive_seed(cfg.seed, r));
    trunc[r] = gen.truncation_fraction;
    cens[r] = gen.censoring_fraction;
    for (std::size_t k = 0; k < nm; ++k) {
      EstimatorSpec spec{cfg.methods[k], cfg.estimand, kDefaultRelTol, oracle};
      auto& cell = cells[k][r];
      try {
        cell.theta_hat = run_estimator(gen.data, spec).theta_hat;
      } catch (const Error&) {
        cell.failed = true;
        continue;
      }
      if (!wants_boot(spec.method)) continue;
      BootstrapConfig bc;
      bc.replications = cfg.bootstrap_replications;
      bc.seed = derive_seed(cfg.bootstrap_seed, r);
      bc.threads = 1;
      bc.ci_level = cfg.ci_level;
      try {
        cell.se = bootstrap_estimate(gen.data, spec, bc, cell.theta_hat).se;
      } catch (const Error&) {
        cell.bootstrap_failed = true;
      }
    }
  });

  double tsum = 0.0, csum = 0.0;
  for (std::size_t r = 0; r < cfg.replications; ++r) {
    tsum += trunc[r];
    csum += cens[r];
  }
  report.mean_truncation_fraction = tsum / static_cast<double>(cfg.replications);
  report.mean_censoring_fraction = csum / static_cast<double>(cfg.replications);

  const double z = normal_quantile(0.5 + cfg.ci_level / 2.0);
  for (std::size_t k = 0; k < nm; ++k) {
    StudyRow row;
    row.method = cfg.methods[k];
    double sum = 0.0;
    for (const auto& c : cells[k]) {
      if (c.failed) {
        ++row.n_failed;
      } else {
        sum += c.theta_hat;
        ++row.n_ok;
      }
    }
    if (row.n_ok > 0) {
      const double mean = sum / static_cast<double>(row.n_ok);
      row.bias = mean - report.theta_true;
      double ss = 0.0;
      for (const auto& c : cells[k]) {
        if (!c.failed) ss += (c.theta_hat - mean) * (c.theta_hat - mean);
      }
      row.sd = row.n_ok > 1 ? std::sqrt(ss / static_cast<double>(row.n_ok - 1)) : 0.0;
    }
    if (wants_boot(row.method)) {
      double se_sum = 0.0;
      std::size_t se_count = 0, covered = 0;
      for (const auto& c : cells[k]) {
        if (c.failed) continue;
        if (c.bootstrap_failed) {
          ++row.n_boot_failed;
          continue;
        }
        se_sum += c.se;
        ++se_count;
        covered += std::abs(c.theta_hat - report.theta_true) <= z * c.se;
      }
      if (se_count > 0) {
        row.mean_boot_se = se_sum / static_cast<double>(se_count);
        row.coverage = static_cast<double>(covered) / static_cast<double>(se_count);
      }
    }
    report.rows.push_back(row);
  }
  if (cfg.keep_replicates) report.replicates = std::move(cells);
  return report;
}

}  // namespace ptrunc
