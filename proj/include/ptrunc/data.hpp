#pragma once

// Left-truncated, right-censored observations and their CSV ingestion.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ptrunc/error.hpp"

namespace ptrunc {

/// One observed (post-truncation) subject: entry time q, follow-up x = min(T, C),
/// event flag delta and the proxy blocks. `u` is the latent factor and is only
/// populated by the simulator.
struct ObservedRecord {
  double q = 0.0;
  double x = 0.0;
  int delta = 1;
  std::vector<double> w1;
  std::vector<double> w2;
  std::vector<double> z;
  std::vector<double> u;

  friend bool operator==(const ObservedRecord&, const ObservedRecord&) = default;
};

/// Immutable collection of records sharing proxy dimensions.
class Dataset {
 public:
  /// Validates every record; tau_q defaults to max_i q_i.
  explicit Dataset(std::vector<ObservedRecord> records, std::optional<double> tau_q = std::nullopt)
      : records_(std::move(records)) {
    if (records_.empty()) throw Error(ErrorCode::kInvalidArgument, "dataset must contain at least one record");
    const auto& first = records_.front();
    d1_ = first.w1.size();
    d2_ = first.w2.size();
    dz_ = first.z.size();
    du_ = first.u.size();
    double max_q = 0.0;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      const auto& r = records_[i];
      if (r.w1.size() != d1_ || r.w2.size() != d2_ || r.z.size() != dz_ || r.u.size() != du_) {
        throw Error(ErrorCode::kDimensionMismatch, "record " + std::to_string(i) + " has inconsistent proxy dimensions");
      }
      if (!std::isfinite(r.q) || !std::isfinite(r.x) || r.q < 0.0) {
        throw Error(ErrorCode::kNonFiniteInput, "record " + std::to_string(i) + " has a non-finite or negative time");
      }
      if (!(r.q < r.x)) {
        throw Error(ErrorCode::kViolatesQltX, "record " + std::to_string(i) + " has q >= x");
      }
      if (r.delta != 0 && r.delta != 1) {
        throw Error(ErrorCode::kInvalidArgument, "record " + std::to_string(i) + " has delta outside {0,1}");
      }
      for (const auto* block : {&r.w1, &r.w2, &r.z, &r.u}) {
        for (double v : *block) {
          if (!std::isfinite(v)) {
            throw Error(ErrorCode::kNonFiniteInput, "record " + std::to_string(i) + " has a non-finite covariate");
          }
        }
      }
      max_q = std::max(max_q, r.q);
    }
    tau_q_ = tau_q.value_or(max_q);
    if (!std::isfinite(tau_q_) || tau_q_ < max_q) {
      throw Error(ErrorCode::kInvalidArgument, "tau_q must be finite and at least max q");
    }
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<ObservedRecord>& records() const { return records_; }
  const ObservedRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t d1() const { return d1_; }
  std::size_t d2() const { return d2_; }
  std::size_t dz() const { return dz_; }
  std::size_t du() const { return du_; }
  double tau_q() const { return tau_q_; }

  double censoring_fraction() const {
    const auto censored = std::count_if(records_.begin(), records_.end(), [](const auto& r) { return r.delta == 0; });
    return static_cast<double>(censored) / static_cast<double>(records_.size());
  }

  double max_followup() const {
    double m = 0.0;
    for (const auto& r : records_) m = std::max(m, r.x);
    return m;
  }

  Dataset with_tau_q(double tau_q) const { return Dataset(records_, tau_q); }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.tau_q_ == b.tau_q_ && a.records_ == b.records_;
  }

 private:
  std::vector<ObservedRecord> records_;
  std::size_t d1_ = 0, d2_ = 0, dz_ = 0, du_ = 0;
  double tau_q_ = 0.0;
};

enum class EstimandKind { kSurvProb, kRmst };

/// nu(t) = 1(t > t0) for survival probability, min(t, t0) for RMST.
struct EstimandSpec {
  EstimandKind kind = EstimandKind::kSurvProb;
  double t0 = 1.0;

  EstimandSpec() = default;
  EstimandSpec(EstimandKind k, double horizon) : kind(k), t0(horizon) {
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw Error(ErrorCode::kInvalidArgument, "t0 must be positive and finite");
  }

  double value(double t) const { return kind == EstimandKind::kSurvProb ? (t > t0 ? 1.0 : 0.0) : std::min(t, t0); }

  /// nu(T) for a subject known to survive past t (right limit of nu at t).
  double value_beyond(double t) const { return kind == EstimandKind::kSurvProb ? (t >= t0 ? 1.0 : 0.0) : std::min(t, t0); }

  double upper_bound() const { return kind == EstimandKind::kSurvProb ? 1.0 : t0; }
};

inline std::string to_string(EstimandKind kind) { return kind == EstimandKind::kSurvProb ? "survprob" : "rmst"; }

inline EstimandKind parse_estimand_kind(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (name == "survprob" || name == "surv_prob" || name == "survival") return EstimandKind::kSurvProb;
  if (name == "rmst") return EstimandKind::kRmst;
  throw Error(ErrorCode::kConfig, "unknown estimand kind '" + name + "'");
}

/// An estimand is only identified up to the maximum follow-up under censoring.
inline void check_estimand(const Dataset& data, const EstimandSpec& nu) {
  if (data.censoring_fraction() > 0.0 && nu.t0 > data.max_followup()) {
    throw Error(ErrorCode::kInvalidArgument, "t0 exceeds the maximum follow-up time of censored data");
  }
}

enum class Role { kQ, kX, kDelta, kW1, kW2, kZ, kU, kIgnore };

inline Role parse_role(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  static const std::map<std::string, Role> kRoles = {{"Q", Role::kQ},   {"X", Role::kX},   {"DELTA", Role::kDelta},
                                                     {"W1", Role::kW1}, {"W2", Role::kW2}, {"Z", Role::kZ},
                                                     {"U", Role::kU},   {"IGNORE", Role::kIgnore}};
  auto it = kRoles.find(name);
  if (it == kRoles.end()) throw Error(ErrorCode::kConfig, "unknown column role '" + name + "'");
  return it->second;
}

/// A covariate that should be replaced by its OLS residual on another column
/// before roles are assigned.
struct Residualization {
  std::string column;
  std::string on;
};

/// Column name to role mapping. Within a multi-column block (W1, W2, Z, U) the
/// declaration order is the covariate order.
struct ColumnSchema {
  std::vector<std::pair<std::string, Role>> columns;
  std::optional<double> tau_q;
  bool strict = false;
  std::vector<Residualization> residualize;

  ColumnSchema& add(std::string name, Role role) {
    columns.emplace_back(std::move(name), role);
    return *this;
  }

  void validate() const {
    int nq = 0, nx = 0, nd = 0;
    std::map<std::string, int> seen;
    for (const auto& [name, role] : columns) {
      if (++seen[name] > 1) throw Error(ErrorCode::kConfig, "column '" + name + "' is assigned more than one role");
      nq += role == Role::kQ;
      nx += role == Role::kX;
      nd += role == Role::kDelta;
    }
    if (nq != 1 || nx != 1 || nd != 1) {
      throw Error(ErrorCode::kConfig, "schema needs exactly one Q, one X and one DELTA column");
    }
  }

  std::vector<std::string> names_with(Role role) const {
    std::vector<std::string> out;
    for (const auto& [name, r] : columns) {
      if (r == role) out.push_back(name);
    }
    return out;
  }
};

/// Ordinary least squares residuals of y on (1, x). Residuals are orthogonal to
/// the constant and to x.
inline std::vector<double> ols_residuals(std::span<const double> y, std::span<const double> x) {
  if (y.size() != x.size()) throw Error(ErrorCode::kDimensionMismatch, "residualization inputs differ in length");
  const std::size_t n = y.size();
  if (n < 3) throw Error(ErrorCode::kInvalidArgument, "residualization needs at least 3 observations");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw Error(ErrorCode::kDegenerateRegressor, "regressor has zero variance");
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  std::vector<double> res(n);
  for (std::size_t i = 0; i < n; ++i) res[i] = y[i] - intercept - slope * x[i];
  // One centering pass removes the floating-point drift in the mean.
  double mean = 0.0;
  for (double r : res) mean += r;
  mean /= static_cast<double>(n);
  for (double& r : res) r -= mean;
  return res;
}

enum class Block { kW1, kW2, kZ, kU };

struct CovariateRef {
  Block block;
  std::size_t index;
};

namespace detail {
inline std::vector<double>& block_of(ObservedRecord& r, Block b) {
  switch (b) {
    case Block::kW1: return r.w1;
    case Block::kW2: return r.w2;
    case Block::kZ: return r.z;
    case Block::kU: return r.u;
  }
  return r.z;
}
inline const std::vector<double>& block_of(const ObservedRecord& r, Block b) {
  return block_of(const_cast<ObservedRecord&>(r), b);
}
}  // namespace detail

/// Replaces `covariate` by its OLS residual on `regressor` (both dataset columns).
inline Dataset residualize_on(const Dataset& data, CovariateRef covariate, CovariateRef regressor) {
  std::vector<double> y, x;
  y.reserve(data.size());
  x.reserve(data.size());
  for (const auto& r : data.records()) {
    const auto& yb = detail::block_of(r, covariate.block);
    const auto& xb = detail::block_of(r, regressor.block);
    if (covariate.index >= yb.size() || regressor.index >= xb.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "covariate reference out of range");
    }
    y.push_back(yb[covariate.index]);
    x.push_back(xb[regressor.index]);
  }
  const auto res = ols_residuals(y, x);
  auto records = data.records();
  for (std::size_t i = 0; i < records.size(); ++i) detail::block_of(records[i], covariate.block)[covariate.index] = res[i];
  return Dataset(std::move(records), data.tau_q());
}

struct LoadReport {
  Dataset dataset;
  std::size_t rows_read = 0;
  std::size_t dropped_missing = 0;
  std::size_t rejected_invalid = 0;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == ".";
}

inline std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a comma-separated table with a header row. Rows with a missing value
/// in any role column are dropped and counted. Rows violating q < x (or with a
/// non-numeric cell) abort under `schema.strict`, otherwise they are dropped.
inline LoadReport load_dataset(std::istream& in, const ColumnSchema& schema) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIo, "empty CSV input (header row expected)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  for (auto& h : detail::split_csv_line(line)) header.push_back(detail::trim(h));

  auto column_index = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found in CSV header");
    return static_cast<std::size_t>(it - header.begin());
  };

  // Columns that have to be parsed: every role column plus residualization inputs.
  std::vector<std::string> needed;
  for (const auto& [name, role] : schema.columns) {
    if (role != Role::kIgnore) needed.push_back(name);
  }
  for (const auto& r : schema.residualize) {
    needed.push_back(r.column);
    needed.push_back(r.on);
  }
  std::sort(needed.begin(), needed.end());
  needed.erase(std::unique(needed.begin(), needed.end()), needed.end());
  std::map<std::string, std::size_t> index;
  for (const auto& name : needed) index[name] = column_index(name);

  std::map<std::string, std::vector<double>> table;
  std::size_t rows_read = 0, dropped = 0, rejected = 0;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows_read;
    const auto cells = detail::split_csv_line(line);
    bool missing = false, bad = false;
    std::map<std::string, double> row;
    for (const auto& [name, col] : index) {
      const std::string cell = col < cells.size() ? detail::trim(cells[col]) : std::string();
      if (detail::is_missing(cell)) {
        missing = true;
        continue;
      }
      auto v = detail::parse_number(cell);
      if (!v) {
        if (schema.strict) {
          throw Error(ErrorCode::kNonNumericCell,
                      "row " + std::to_string(row_number) + ", column '" + name + "': '" + cell + "'");
        }
        bad = true;
        continue;
      }
      row[name] = *v;
    }
    if (missing) {
      ++dropped;
      continue;
    }
    if (bad) {
      ++rejected;
      continue;
    }
    const double q = row[schema.names_with(Role::kQ).front()];
    const double x = row[schema.names_with(Role::kX).front()];
    const double d = row[schema.names_with(Role::kDelta).front()];
    if (!(q < x) || q < 0.0 || (d != 0.0 && d != 1.0)) {
      if (schema.strict) {
        if (!(q < x)) throw Error(ErrorCode::kViolatesQltX, "row " + std::to_string(row_number) + " has q >= x");
        throw Error(ErrorCode::kInvalidArgument, "row " + std::to_string(row_number) + " has invalid q or delta");
      }
      ++rejected;
      continue;
    }
    for (const auto& [name, v] : row) table[name].push_back(v);
  }
  if (table.empty()) throw Error(ErrorCode::kInvalidArgument, "no valid rows in CSV input");

  for (const auto& r : schema.residualize) table[r.column] = ols_residuals(table[r.column], table[r.on]);

  const std::size_t n = table.begin()->second.size();
  std::vector<ObservedRecord> records(n);
  for (const auto& [name, role] : schema.columns) {
    if (role == Role::kIgnore) continue;
    const auto& col = table[name];
    for (std::size_t i = 0; i < n; ++i) {
      auto& rec = records[i];
      switch (role) {
        case Role::kQ: rec.q = col[i]; break;
        case Role::kX: rec.x = col[i]; break;
        case Role::kDelta: rec.delta = static_cast<int>(col[i]); break;
        case Role::kW1: rec.w1.push_back(col[i]); break;
        case Role::kW2: rec.w2.push_back(col[i]); break;
        case Role::kZ: rec.z.push_back(col[i]); break;
        case Role::kU: rec.u.push_back(col[i]); break;
        case Role::kIgnore: break;
      }
    }
  }
  return LoadReport{Dataset(std::move(records), schema.tau_q), rows_read, dropped, rejected};
}

inline LoadReport load_dataset(const std::string& csv_path, const ColumnSchema& schema) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + csv_path + "'");
  return load_dataset(in, schema);
}

/// Schema matching `write_dataset` output for a dataset of the given shape.
inline ColumnSchema default_schema(const Dataset& data) {
  ColumnSchema s;
  s.add("q", Role::kQ).add("x", Role::kX).add("delta", Role::kDelta);
  for (std::size_t j = 0; j < data.d1(); ++j) s.add("w1_" + std::to_string(j + 1), Role::kW1);
  for (std::size_t j = 0; j < data.d2(); ++j) s.add("w2_" + std::to_string(j + 1), Role::kW2);
  for (std::size_t j = 0; j < data.dz(); ++j) s.add("z_" + std::to_string(j + 1), Role::kZ);
  for (std::size_t j = 0; j < data.du(); ++j) s.add("u_" + std::to_string(j + 1), Role::kU);
  return s;
}

/// Writes the dataset with full round-trip precision using `default_schema` names.
inline void write_dataset(std::ostream& out, const Dataset& data) {
  const auto schema = default_schema(data);
  for (std::size_t j = 0; j < schema.columns.size(); ++j) out << (j ? "," : "") << schema.columns[j].first;
  out << '\n';
  out << std::setprecision(17);
  for (const auto& r : data.records()) {
    out << r.q << ',' << r.x << ',' << r.delta;
    for (const auto* block : {&r.w1, &r.w2, &r.z, &r.u}) {
      for (double v : *block) out << ',' << v;
    }
    out << '\n';
  }
}

}  // namespace ptrunc
