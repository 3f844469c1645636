#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ptrunc {

enum class ErrorCode {
  kInvalidArgument,
  kMissingColumn,
  kNonNumericCell,
  kViolatesQltX,
  kDegenerateRegressor,
  kAllWeightsZero,
  kNoComparablePairs,
  kNonFiniteInput,
  kDimensionMismatch,
  kZeroDenominator,
  kTooManyFailures,
  kSingularProxyLaw,
  kConfig,
  kIo,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kViolatesQltX: return "ViolatesQltX";
    case ErrorCode::kDegenerateRegressor: return "DegenerateRegressor";
    case ErrorCode::kAllWeightsZero: return "AllWeightsZero";
    case ErrorCode::kNoComparablePairs: return "NoComparablePairs";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kZeroDenominator: return "ZeroDenominator";
    case ErrorCode::kTooManyFailures: return "TooManyFailures";
    case ErrorCode::kSingularProxyLaw: return "SingularProxyLaw";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Non-fatal conditions raised while estimating. They travel with results
// instead of aborting the computation.
enum class Flag : std::uint32_t {
  kEmptyRiskSet = 1u << 0,
  kEmptyRiskSetAtJump = 1u << 1,
  kRankDeficientStep = 1u << 2,
  kExpOverflowClamped = 1u << 3,
  kCensorWeightFloorHit = 1u << 4,
  kCdfClampedAboveOne = 1u << 5,
  kCdfFloorHit = 1u << 6,
  kCurveUndefinedAt = 1u << 7,
};

class Flags {
 public:
  constexpr Flags() = default;

  constexpr void set(Flag f) { bits_ |= static_cast<std::uint32_t>(f); }
  constexpr bool has(Flag f) const { return (bits_ & static_cast<std::uint32_t>(f)) != 0; }
  constexpr bool any() const { return bits_ != 0; }
  constexpr std::uint32_t bits() const { return bits_; }
  constexpr Flags& operator|=(Flags other) {
    bits_ |= other.bits_;
    return *this;
  }
  friend constexpr bool operator==(Flags, Flags) = default;

  std::vector<std::string> names() const {
    static constexpr std::pair<Flag, std::string_view> kNames[] = {
        {Flag::kEmptyRiskSet, "EmptyRiskSet"},
        {Flag::kEmptyRiskSetAtJump, "EmptyRiskSetAtJump"},
        {Flag::kRankDeficientStep, "RankDeficientStep"},
        {Flag::kExpOverflowClamped, "ExpOverflowClamped"},
        {Flag::kCensorWeightFloorHit, "CensorWeightFloorHit"},
        {Flag::kCdfClampedAboveOne, "CdfClampedAboveOne"},
        {Flag::kCdfFloorHit, "CdfFloorHit"},
        {Flag::kCurveUndefinedAt, "CurveUndefinedAt"},
    };
    std::vector<std::string> out;
    for (const auto& [flag, name] : kNames) {
      if (has(flag)) out.emplace_back(name);
    }
    return out;
  }

 private:
  std::uint32_t bits_ = 0;
};

}  // namespace ptrunc
