// ptrunc command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation failure.

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ptrunc/config.hpp"
#include "ptrunc/io.hpp"
#include "ptrunc/ptrunc.hpp"

namespace {

using namespace ptrunc;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitEstimation = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return kExitConfig;
    case ErrorCode::kMissingColumn:
    case ErrorCode::kNonNumericCell:
    case ErrorCode::kViolatesQltX:
    case ErrorCode::kDegenerateRegressor:
    case ErrorCode::kNonFiniteInput:
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kIo: return kExitData;
    default: return kExitEstimation;
  }
}

struct DataOptions {
  std::string data;
  std::string schema;
  std::optional<double> tau_q;
  bool strict = false;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.data, "CSV file with a header row")->required()->check(CLI::ExistingFile);
  cmd->add_option("--schema", o.schema, "column schema (TOML, or JSON by .json extension)");
  cmd->add_option("--tau-q", o.tau_q, "truncation support bound (default: schema value or max entry time)");
  cmd->add_flag("--strict", o.strict, "abort on invalid rows instead of dropping them");
}

/// Without --schema, columns named q, x, delta, w1_*, w2_*, z_*, u_* are used.
ColumnSchema infer_schema(const std::string& path) {
  std::ifstream in(path);
  std::string header;
  if (!in || !std::getline(in, header)) throw Error(ErrorCode::kIo, "cannot read header of '" + path + "'");
  if (!header.empty() && header.back() == '\r') header.pop_back();
  ColumnSchema s;
  std::vector<std::string> names;
  std::stringstream ss(header);
  for (std::string cell; std::getline(ss, cell, ',');) names.push_back(cell);
  auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  for (const char* required : {"q", "x", "delta"}) {
    if (!has(required)) {
      throw Error(ErrorCode::kMissingColumn, std::string("column '") + required + "' not found and no --schema given");
    }
  }
  s.add("q", Role::kQ).add("x", Role::kX).add("delta", Role::kDelta);
  for (const auto& [prefix, role] : {std::pair{"w1_", Role::kW1}, std::pair{"w2_", Role::kW2}, std::pair{"z_", Role::kZ},
                                     std::pair{"u_", Role::kU}}) {
    for (const auto& n : names) {
      if (n.rfind(prefix, 0) == 0) s.add(n, role);
    }
  }
  return s;
}

Dataset load(const DataOptions& o) {
  ColumnSchema schema = o.schema.empty() ? infer_schema(o.data) : schema_from_json(load_config_file(o.schema));
  if (o.tau_q) schema.tau_q = o.tau_q;
  schema.strict = schema.strict || o.strict;
  auto report = load_dataset(o.data, schema);
  if (report.dropped_missing || report.rejected_invalid) {
    std::cerr << "read " << report.rows_read << " rows; dropped " << report.dropped_missing << " with missing values, "
              << report.rejected_invalid << " invalid\n";
  }
  return std::move(report.dataset);
}

std::vector<std::string> split_list(const std::vector<std::string>& items) {
  std::vector<std::string> out;
  for (const auto& item : items) {
    std::stringstream ss(item);
    for (std::string part; std::getline(ss, part, ',');) {
      if (!part.empty()) out.push_back(part);
    }
  }
  return out;
}

struct EstimateOptions {
  DataOptions data;
  std::string estimand = "survprob";
  std::vector<std::string> t0 = {"1"};
  std::vector<std::string> methods = {"pqb,ipqw,pl,km,naive"};
  std::size_t bootstrap = 0;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double ci_level = 0.95;
  std::string format = "json";
};

int cmd_estimate(const EstimateOptions& o) {
  std::vector<double> t0s;
  std::vector<Method> methods;
  EstimandKind kind;
  try {
    kind = parse_estimand_kind(o.estimand);
    for (const auto& s : split_list(o.t0)) {
      std::size_t used = 0;
      t0s.push_back(std::stod(s, &used));
      if (used != s.size()) throw Error(ErrorCode::kConfig, "invalid --t0 value '" + s + "'");
    }
    for (const auto& m : split_list(o.methods)) methods.push_back(parse_method(m));
  } catch (const std::invalid_argument&) {
    throw Error(ErrorCode::kConfig, "invalid --t0 list");
  }
  if (t0s.empty() || methods.empty()) throw Error(ErrorCode::kConfig, "--t0 and --methods must not be empty");
  for (auto m : methods) {
    if (m == Method::kIpqwOracle) throw Error(ErrorCode::kConfig, "IPQW-o needs the true nuisances (simulation only)");
  }
  if (o.bootstrap == 1) throw Error(ErrorCode::kConfig, "--bootstrap must be 0 or at least 2");
  if (!(o.ci_level > 0.0 && o.ci_level < 1.0)) throw Error(ErrorCode::kConfig, "--ci-level must be in (0, 1)");
  for (double t : t0s) {
    if (!(t > 0.0)) throw Error(ErrorCode::kConfig, "--t0 values must be positive");
  }

  const Dataset data = load(o.data);
  std::vector<EstimateCell> cells;
  bool any_failed = false;
  for (double t0 : t0s) {
    const EstimandSpec nu(kind, t0);
    for (auto m : methods) {
      EstimateCell cell{m, nu, std::nullopt, {}};
      const EstimatorSpec spec{m, nu, kDefaultRelTol, nullptr};
      try {
        if (o.bootstrap >= 2) {
          BootstrapConfig bc;
          bc.replications = o.bootstrap;
          bc.seed = o.seed;
          bc.threads = o.threads;
          bc.ci_level = o.ci_level;
          cell.estimate = estimate_with_bootstrap(data, spec, bc);
        } else {
          cell.estimate = run_estimator(data, spec);
        }
      } catch (const Error& e) {
        cell.error = e.what();
        std::cerr << method_name(m) << " at t0 = " << t0 << " failed: " << cell.error << '\n';
        any_failed = true;
      }
      cells.push_back(std::move(cell));
    }
  }
  if (o.format == "json") {
    Json out = Json::array();
    for (const auto& c : cells) out.push_back(to_json(c));
    std::cout << out.dump(2) << '\n';
  } else if (o.format == "csv") {
    write_estimates_csv(std::cout, cells);
  } else {
    write_estimates_table(std::cout, cells);
  }
  return any_failed ? kExitEstimation : 0;
}

struct SimulateOptions {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string format = "table";
};

int cmd_simulate(const SimulateOptions& o) {
  StudyConfig cfg = study_from_json(load_config_file(o.config));
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.bootstrap_seed = derive_seed(*o.seed, 0xb007);
  }
  if (o.threads) cfg.threads = *o.threads;
  std::cerr << "tau_q_sim = " << cfg.params.tau_q_sim << ", seed = " << cfg.seed
            << ", bootstrap_seed = " << cfg.bootstrap_seed << '\n';
  const auto report = run_study(cfg);
  const auto json = to_json(report).dump(2);
  if (!o.out.empty()) {
    std::ofstream jf(o.out + ".json"), cf(o.out + ".csv");
    if (!jf || !cf) throw Error(ErrorCode::kConfig, "cannot write report files with prefix '" + o.out + "'");
    jf << json << '\n';
    write_study_csv(cf, report);
  }
  if (o.format == "json") {
    std::cout << json << '\n';
  } else if (o.format == "csv") {
    write_study_csv(std::cout, report);
  } else {
    write_study_table(std::cout, report);
  }
  return 0;
}

struct CurvesOptions {
  DataOptions data;
  std::string kind = "pl";
  std::string mode = "time-varying";
};

int cmd_curves(const CurvesOptions& o) {
  const Dataset data = load(o.data);
  std::cout << std::setprecision(12);
  const WeightMode mode = o.mode == "case-weight" ? WeightMode::kCaseWeight : WeightMode::kTimeVarying;
  if (o.kind == "pl") {
    product_limit_truncation(data).curve.write_csv(std::cout);
  } else if (o.kind == "km") {
    km_ignore_truncation(data).write_csv(std::cout);
  } else if (o.kind == "sd") {
    km_residual_survival(data).write_csv(std::cout);
  } else {
    const auto s_d = km_residual_survival(data);
    const auto bridge = fit_bridge(data, s_d, mode);
    for (const auto& f : bridge.flags.names()) std::cerr << "flag: " << f << '\n';
    bridge.path.write_csv(std::cout);
  }
  return 0;
}

int cmd_kendall(const DataOptions& o) {
  std::cout << to_json(kendall_tau_test(load(o))).dump(2) << '\n';
  return 0;
}

struct GenerateOptions {
  std::string config;
  std::size_t n = 1000;
  std::uint64_t seed = 1;
};

int cmd_generate(const GenerateOptions& o) {
  DgmParams params;
  if (!o.config.empty()) {
    const auto doc = load_config_file(o.config);
    params = doc.contains("dgm") ? dgm_from_json(doc["dgm"]) : study_from_json(doc).params;
  }
  if (o.n == 0) throw Error(ErrorCode::kConfig, "--n must be positive");
  const auto gen = generate_observed(o.n, params, o.seed);
  std::cerr << "truncation fraction " << gen.truncation_fraction << ", censoring fraction " << gen.censoring_fraction
            << '\n';
  write_dataset(std::cout, gen.data);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal estimation of survival functionals under dependent left truncation"};
  app.require_subcommand(1);

  EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "estimate survival functionals from a CSV dataset");
  add_data_options(estimate, est.data);
  estimate->add_option("--estimand", est.estimand, "survprob or rmst")->check(CLI::IsMember({"survprob", "rmst"}));
  estimate->add_option("--t0", est.t0, "horizon(s), comma separated")->delimiter(',');
  estimate->add_option("--methods", est.methods, "comma-separated methods: pqb,pqb-cw,ipqw,ipqw-cw,ipqw-u,ipqw-u-cw,pl,km,naive")
      ->delimiter(',');
  estimate->add_option("--bootstrap", est.bootstrap, "random-weighting bootstrap replications (0 = none)");
  estimate->add_option("--seed", est.seed, "bootstrap seed");
  estimate->add_option("--threads", est.threads, "worker threads (0 = all cores)");
  estimate->add_option("--ci-level", est.ci_level, "Wald interval level");
  estimate->add_option("--format", est.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "run a Monte Carlo study from a TOML config");
  simulate->add_option("--config", sim.config, "study config")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "write <prefix>.json and <prefix>.csv");
  simulate->add_option("--seed", sim.seed, "override the data seed (bootstrap seed is derived from it)");
  simulate->add_option("--threads", sim.threads, "worker threads (0 = all cores)");
  simulate->add_option("--format", sim.format, "json, csv or table")->check(CLI::IsMember({"json", "csv", "table"}));

  CurvesOptions cur;
  auto* curves = app.add_subcommand("curves", "export pl, km, sd (residual censoring) or bridge curves as CSV");
  add_data_options(curves, cur.data);
  curves->add_option("--kind", cur.kind, "pl, km, sd or bridge")->check(CLI::IsMember({"pl", "km", "sd", "bridge"}));
  curves->add_option("--weight-mode", cur.mode, "bridge IPCW mode")->check(CLI::IsMember({"time-varying", "case-weight"}));

  DataOptions ken;
  auto* kendall = app.add_subcommand("kendall", "conditional Kendall's tau test of quasi-independence");
  add_data_options(kendall, ken);

  GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "write one simulated dataset as CSV");
  generate->add_option("--config", gen.config, "study config or a file with a [dgm] table")->check(CLI::ExistingFile);
  generate->add_option("--n", gen.n, "number of retained subjects");
  generate->add_option("--seed", gen.seed, "data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*estimate) return cmd_estimate(est);
    if (*simulate) return cmd_simulate(sim);
    if (*curves) return cmd_curves(cur);
    if (*kendall) return cmd_kendall(ken);
    if (*generate) return cmd_generate(gen);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitEstimation;
  }
  return 0;
}
