#pragma once

// JSON / CSV / plain-table writers for estimates, study reports and the
// Kendall test.

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptrunc/config.hpp"
#include "ptrunc/estimators.hpp"
#include "ptrunc/simulation.hpp"
#include "ptrunc/survival.hpp"

namespace ptrunc {

namespace detail {

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::string fmt(double v, int precision = 10) {
  if (std::isnan(v)) return "NA";
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

inline std::string fmt(const std::optional<double>& v, int precision = 10) { return v ? fmt(*v, precision) : "NA"; }

inline std::string join_flags(const Flags& f) {
  std::string out;
  for (const auto& name : f.names()) out += (out.empty() ? "" : ";") + name;
  return out;
}

}  // namespace detail

inline Json to_json(const Estimate& e) {
  Json j;
  j["method"] = std::string(method_name(e.method));
  j["estimand"] = to_string(e.estimand.kind);
  j["t0"] = e.estimand.t0;
  j["theta_hat"] = e.theta_hat;
  j["se"] = detail::optional_number(e.se);
  j["ci_low"] = detail::optional_number(e.ci_low);
  j["ci_high"] = detail::optional_number(e.ci_high);
  j["n_used"] = e.n_used;
  j["weights"] = {{"min", e.weights.min}, {"max", e.weights.max}, {"ess", e.weights.ess}};
  j["flags"] = e.flags.names();
  if (e.bootstrap_replications > 0) {
    j["bootstrap"] = {{"replications", e.bootstrap_replications}, {"failed", e.bootstrap_failed}};
  }
  return j;
}

inline Json to_json(const KendallResult& k) {
  return {{"tau_c", k.tau_c},   {"n_comparable", k.n_comparable}, {"statistic", k.statistic},
          {"variance", k.variance}, {"z_score", k.z_score},       {"p_value", k.p_value}};
}

/// Failed cells (estimation error) are reported with an "error" field.
struct EstimateCell {
  Method method = Method::kPqb;
  EstimandSpec estimand;
  std::optional<Estimate> estimate;
  std::string error;
};

inline Json to_json(const EstimateCell& c) {
  if (c.estimate) return to_json(*c.estimate);
  return {{"method", std::string(method_name(c.method))},
          {"estimand", to_string(c.estimand.kind)},
          {"t0", c.estimand.t0},
          {"error", c.error}};
}

inline void write_estimates_csv(std::ostream& out, const std::vector<EstimateCell>& cells) {
  out << "method,estimand,t0,theta_hat,se,ci_low,ci_high,n_used,ess,flags,error\n";
  for (const auto& c : cells) {
    out << method_name(c.method) << ',' << to_string(c.estimand.kind) << ',' << detail::fmt(c.estimand.t0) << ',';
    if (c.estimate) {
      const auto& e = *c.estimate;
      out << detail::fmt(e.theta_hat) << ',' << detail::fmt(e.se) << ',' << detail::fmt(e.ci_low) << ','
          << detail::fmt(e.ci_high) << ',' << e.n_used << ',' << detail::fmt(e.weights.ess, 6) << ','
          << detail::join_flags(e.flags) << ",\n";
    } else {
      out << "NA,NA,NA,NA,0,NA,," << '"' << c.error << "\"\n";
    }
  }
}

inline void write_estimates_table(std::ostream& out, const std::vector<EstimateCell>& cells) {
  out << std::left << std::setw(11) << "method" << std::setw(10) << "estimand" << std::setw(9) << "t0" << std::setw(11)
      << "theta_hat" << std::setw(11) << "se" << std::setw(24) << "95% CI" << "flags\n";
  for (const auto& c : cells) {
    out << std::setw(11) << method_name(c.method) << std::setw(10) << to_string(c.estimand.kind) << std::setw(9)
        << detail::fmt(c.estimand.t0, 6);
    if (!c.estimate) {
      out << "error: " << c.error << '\n';
      continue;
    }
    const auto& e = *c.estimate;
    const std::string ci = e.ci_low ? "[" + detail::fmt(*e.ci_low, 4) + ", " + detail::fmt(*e.ci_high, 4) + "]" : "";
    out << std::setw(11) << detail::fmt(e.theta_hat, 5) << std::setw(11) << detail::fmt(e.se, 4) << std::setw(24) << ci
        << detail::join_flags(e.flags) << '\n';
  }
}

inline Json to_json(const DgmParams& p) {
  return {{"latent_mean", p.latent_mean},   {"latent_sd", p.latent_sd},       {"w1_intercept", p.w1_intercept},
          {"w1_z", p.w1_z},                 {"w1_u", p.w1_u},                 {"w1_sd", p.w1_sd},
          {"w2_intercept", p.w2_intercept}, {"w2_z", p.w2_z},                 {"w2_u", p.w2_u},
          {"w2_sd", p.w2_sd},               {"hazard_0", p.hazard_0},         {"hazard_z", p.hazard_z},
          {"hazard_u", p.hazard_u},         {"reverse_0", p.reverse_0},       {"reverse_z", p.reverse_z},
          {"reverse_u", p.reverse_u},       {"censor_shape", p.censor_shape},
          {"censor_scale", std::isinf(p.censor_scale) ? Json("inf") : Json(p.censor_scale)},
          {"tau_q_sim", p.tau_q_sim},       {"entry_at_zero", p.entry_at_zero}};
}

/// Thread count is deliberately omitted so reports do not depend on it.
inline Json to_json(const StudyReport& r) {
  const auto& c = r.config;
  Json j;
  j["n"] = c.n;
  j["replications"] = c.replications;
  j["bootstrap_replications"] = c.bootstrap_replications;
  j["seed"] = c.seed;
  j["bootstrap_seed"] = c.bootstrap_seed;
  j["estimand"] = {{"kind", to_string(c.estimand.kind)}, {"t0", c.estimand.t0}};
  j["tau_q_sim"] = c.params.tau_q_sim;
  j["dgm"] = to_json(c.params);
  j["theta_true"] = r.theta_true;
  j["mean_truncation_fraction"] = r.mean_truncation_fraction;
  j["mean_censoring_fraction"] = r.mean_censoring_fraction;
  Json rows = Json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"method", std::string(method_name(row.method))},
                    {"bias", row.bias},
                    {"sd", row.sd},
                    {"boot_se", detail::optional_number(row.mean_boot_se)},
                    {"cp", detail::optional_number(row.coverage)},
                    {"n_ok", row.n_ok},
                    {"n_failed", row.n_failed},
                    {"n_boot_failed", row.n_boot_failed}});
  }
  j["rows"] = rows;
  if (!r.replicates.empty()) {
    Json reps = Json::object();
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
      Json list = Json::array();
      for (const auto& cell : r.replicates[k]) {
        list.push_back({{"theta_hat", cell.failed ? Json(nullptr) : Json(cell.theta_hat)},
                        {"se", std::isnan(cell.se) ? Json(nullptr) : Json(cell.se)}});
      }
      reps[std::string(method_name(r.rows[k].method))] = list;
    }
    j["replicates"] = reps;
  }
  return j;
}

inline void write_study_csv(std::ostream& out, const StudyReport& r) {
  out << "method,bias,sd,boot_se,cp,n_ok,n_failed,n_boot_failed\n";
  for (const auto& row : r.rows) {
    out << method_name(row.method) << ',' << detail::fmt(row.bias) << ',' << detail::fmt(row.sd) << ','
        << detail::fmt(row.mean_boot_se) << ',' << detail::fmt(row.coverage) << ',' << row.n_ok << ',' << row.n_failed
        << ',' << row.n_boot_failed << '\n';
  }
}

inline void write_study_table(std::ostream& out, const StudyReport& r) {
  out << "n = " << r.config.n << ", replications = " << r.config.replications << ", theta = " << detail::fmt(r.theta_true, 6)
      << ", tau_q_sim = " << r.config.params.tau_q_sim << '\n';
  out << std::left << std::setw(11) << "method" << std::setw(11) << "bias" << std::setw(10) << "SD" << std::setw(10)
      << "bootSE" << "CP\n";
  for (const auto& row : r.rows) {
    out << std::setw(11) << method_name(row.method) << std::setw(11) << detail::fmt(row.bias, 4) << std::setw(10)
        << detail::fmt(row.sd, 4) << std::setw(10) << detail::fmt(row.mean_boot_se, 4) << detail::fmt(row.coverage, 3)
        << '\n';
  }
}

}  // namespace ptrunc
