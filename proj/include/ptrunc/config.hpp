#pragma once

// TOML / JSON configuration for column schemas and simulation studies. TOML
// documents are converted to JSON values so both formats share one reader.

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <toml.hpp>

#include "ptrunc/data.hpp"
#include "ptrunc/error.hpp"
#include "ptrunc/estimators.hpp"
#include "ptrunc/simulation.hpp"

namespace ptrunc {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json toml_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    Json out = Json::object();
    for (const auto& [key, value] : *t) out[std::string(key.str())] = toml_to_json(value);
    return out;
  }
  if (const auto* a = node.as_array()) {
    Json out = Json::array();
    for (const auto& value : *a) out.push_back(toml_to_json(value));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  throw Error(ErrorCode::kConfig, "unsupported TOML value (dates and times are not used)");
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline double as_number(const Json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "Infinity") return std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorCode::kConfig, "'" + key + "' must be a number");
}

inline std::uint64_t as_seed(const Json& v, const std::string& key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw Error(ErrorCode::kConfig, "'" + key + "' must be a nonnegative integer");
}

inline std::size_t as_count(const Json& v, const std::string& key) { return static_cast<std::size_t>(as_seed(v, key)); }

inline std::vector<std::string> as_names(const Json& v, const std::string& key) {
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw Error(ErrorCode::kConfig, "'" + key + "' must be a string or an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw Error(ErrorCode::kConfig, "'" + key + "' must contain strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace detail

/// Parses TOML text (or JSON when `as_json`) into a JSON value.
inline Json parse_config_text(const std::string& text, bool as_json) {
  try {
    if (as_json) return Json::parse(text);
    return detail::toml_to_json(toml::parse(text));
  } catch (const toml::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("TOML parse error: ") + std::string(e.description()));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfig, std::string("JSON parse error: ") + e.what());
  }
}

/// Reads a config file; `.json` files are JSON, anything else TOML.
inline Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), detail::ends_with(path, ".json"));
}

/// Column schema document:
///   q = "entry", x = "exit", delta = "event"        (required)
///   w1 = [...], w2 = [...], z = [...], u = [...]      (optional, ordered)
///   tau_q = 71.3, strict = false                       (optional)
///   residualize = [{ column = "w1a", on = "z1" }]      (optional)
inline ColumnSchema schema_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "schema must be a table");
  detail::reject_unknown_keys(doc, {"q", "x", "delta", "w1", "w2", "z", "u", "ignore", "tau_q", "strict", "residualize"},
                              "schema");
  ColumnSchema s;
  for (const auto& [key, role] : {std::pair{"q", Role::kQ}, std::pair{"x", Role::kX}, std::pair{"delta", Role::kDelta}}) {
    if (!doc.contains(key)) throw Error(ErrorCode::kConfig, std::string("schema is missing '") + key + "'");
    if (!doc[key].is_string()) throw Error(ErrorCode::kConfig, std::string("schema '") + key + "' must be a column name");
    s.add(doc[key].get<std::string>(), role);
  }
  for (const auto& [key, role] : {std::pair{"w1", Role::kW1}, std::pair{"w2", Role::kW2}, std::pair{"z", Role::kZ},
                                  std::pair{"u", Role::kU}}) {
    if (doc.contains(key)) {
      for (auto& name : detail::as_names(doc[key], key)) s.add(std::move(name), role);
    }
  }
  if (doc.contains("tau_q")) s.tau_q = detail::as_number(doc["tau_q"], "tau_q");
  if (doc.contains("strict")) {
    if (!doc["strict"].is_boolean()) throw Error(ErrorCode::kConfig, "'strict' must be a boolean");
    s.strict = doc["strict"].get<bool>();
  }
  if (doc.contains("residualize")) {
    const auto& list = doc["residualize"];
    if (!list.is_array()) throw Error(ErrorCode::kConfig, "'residualize' must be an array of tables");
    for (const auto& r : list) {
      if (!r.is_object() || !r.contains("column") || !r.contains("on") || !r["column"].is_string() ||
          !r["on"].is_string()) {
        throw Error(ErrorCode::kConfig, "each residualize entry needs 'column' and 'on'");
      }
      s.residualize.push_back({r["column"].get<std::string>(), r["on"].get<std::string>()});
    }
  }
  s.validate();
  return s;
}

inline DgmParams dgm_from_json(const Json& doc) {
  DgmParams p;
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "[dgm] must be a table");
  const std::pair<const char*, double DgmParams::*> fields[] = {
      {"latent_mean", &DgmParams::latent_mean},   {"latent_sd", &DgmParams::latent_sd},
      {"w1_intercept", &DgmParams::w1_intercept}, {"w1_z", &DgmParams::w1_z},
      {"w1_u", &DgmParams::w1_u},                 {"w1_sd", &DgmParams::w1_sd},
      {"w2_intercept", &DgmParams::w2_intercept}, {"w2_z", &DgmParams::w2_z},
      {"w2_u", &DgmParams::w2_u},                 {"w2_sd", &DgmParams::w2_sd},
      {"hazard_0", &DgmParams::hazard_0},         {"hazard_z", &DgmParams::hazard_z},
      {"hazard_u", &DgmParams::hazard_u},         {"reverse_0", &DgmParams::reverse_0},
      {"reverse_z", &DgmParams::reverse_z},       {"reverse_u", &DgmParams::reverse_u},
      {"censor_shape", &DgmParams::censor_shape}, {"censor_scale", &DgmParams::censor_scale},
      {"tau_q_sim", &DgmParams::tau_q_sim}};
  for (const auto& [key, value] : doc.items()) {
    if (key == "entry_at_zero") {
      if (!value.is_boolean()) throw Error(ErrorCode::kConfig, "'entry_at_zero' must be a boolean");
      p.entry_at_zero = value.get<bool>();
      continue;
    }
    auto it = std::find_if(std::begin(fields), std::end(fields), [&](const auto& f) { return key == f.first; });
    if (it == std::end(fields)) throw Error(ErrorCode::kConfig, "unknown key '" + key + "' in [dgm]");
    p.*(it->second) = detail::as_number(value, key);
  }
  if (!(p.latent_sd > 0.0) || !(p.w1_sd >= 0.0) || !(p.w2_sd >= 0.0) || !(p.censor_shape > 0.0) ||
      !(p.censor_scale > 0.0) || !(p.tau_q_sim > 0.0) || p.hazard_0 <= 0.0 || p.reverse_0 <= 0.0 || p.hazard_z < 0.0 ||
      p.hazard_u < 0.0 || p.reverse_z < 0.0 || p.reverse_u < 0.0 || p.w1_u == 0.0) {
    throw Error(ErrorCode::kConfig, "[dgm] parameters out of range");
  }
  return p;
}

inline std::vector<Method> methods_from_json(const Json& v, const std::string& key) {
  std::vector<Method> out;
  for (const auto& name : detail::as_names(v, key)) {
    if (name == "all") {
      out.assign(std::begin(kAllMethods), std::end(kAllMethods));
    } else {
      out.push_back(parse_method(name));
    }
  }
  return out;
}

/// Study document: n, replications, bootstrap_replications, seed,
/// bootstrap_seed, threads, ci_level, methods, bootstrap_methods,
/// keep_replicates, [estimand] { kind, t0 }, [dgm] { ... }.
inline StudyConfig study_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kConfig, "study config must be a table");
  detail::reject_unknown_keys(doc,
                              {"n", "replications", "bootstrap_replications", "seed", "bootstrap_seed", "threads",
                               "ci_level", "methods", "bootstrap_methods", "keep_replicates", "estimand", "dgm"},
                              "study config");
  StudyConfig c;
  if (doc.contains("n")) c.n = detail::as_count(doc["n"], "n");
  if (doc.contains("replications")) c.replications = detail::as_count(doc["replications"], "replications");
  if (doc.contains("bootstrap_replications")) {
    c.bootstrap_replications = detail::as_count(doc["bootstrap_replications"], "bootstrap_replications");
  }
  if (doc.contains("seed")) c.seed = detail::as_seed(doc["seed"], "seed");
  if (doc.contains("bootstrap_seed")) c.bootstrap_seed = detail::as_seed(doc["bootstrap_seed"], "bootstrap_seed");
  if (doc.contains("threads")) c.threads = static_cast<unsigned>(detail::as_count(doc["threads"], "threads"));
  if (doc.contains("ci_level")) c.ci_level = detail::as_number(doc["ci_level"], "ci_level");
  if (doc.contains("methods")) c.methods = methods_from_json(doc["methods"], "methods");
  c.bootstrap_methods = c.methods;
  if (doc.contains("bootstrap_methods")) c.bootstrap_methods = methods_from_json(doc["bootstrap_methods"], "bootstrap_methods");
  if (doc.contains("keep_replicates")) {
    if (!doc["keep_replicates"].is_boolean()) throw Error(ErrorCode::kConfig, "'keep_replicates' must be a boolean");
    c.keep_replicates = doc["keep_replicates"].get<bool>();
  }
  if (doc.contains("estimand")) {
    const auto& e = doc["estimand"];
    detail::reject_unknown_keys(e, {"kind", "t0"}, "[estimand]");
    if (e.contains("kind") && !e["kind"].is_string()) throw Error(ErrorCode::kConfig, "estimand 'kind' must be a string");
    const auto kind = e.contains("kind") ? parse_estimand_kind(e["kind"].get<std::string>()) : EstimandKind::kSurvProb;
    const double t0 = e.contains("t0") ? detail::as_number(e["t0"], "t0") : 1.0;
    c.estimand = EstimandSpec(kind, t0);
  }
  if (doc.contains("dgm")) c.params = dgm_from_json(doc["dgm"]);
  if (c.n == 0 || c.replications == 0) throw Error(ErrorCode::kConfig, "n and replications must be positive");
  if (c.bootstrap_replications == 1) throw Error(ErrorCode::kConfig, "bootstrap_replications must be 0 or at least 2");
  if (!(c.ci_level > 0.0 && c.ci_level < 1.0)) throw Error(ErrorCode::kConfig, "ci_level must be in (0, 1)");
  if (c.methods.empty()) throw Error(ErrorCode::kConfig, "methods must not be empty");
  return c;
}

}  // namespace ptrunc
