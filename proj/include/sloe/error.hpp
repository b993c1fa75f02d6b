#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sloe {

enum class ErrorCode {
  // usage / contract
  InvalidArgument,
  // data problems
  FileNotFound,
  ParseError,
  MissingValue,
  NonBinaryOutcome,
  ConstantColumn,
  // numerical failures
  SeparableData,
  SeparableSubproblem,
  SingularHessian,
  NotConverged,
  LeverageAtOne,
  NonPsdCovariance,
  OutsideExistenceRegion,
  NoConvergence,
  InconsistentEta,
  KappaMismatch,
  AlreadySeparable,
  FrontierOutOfRange,
};

enum class ErrorCategory { Usage, Data, Numerical };

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::NonBinaryOutcome: return "NonBinaryOutcome";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::SeparableData: return "SeparableData";
    case ErrorCode::SeparableSubproblem: return "SeparableSubproblem";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::LeverageAtOne: return "LeverageAtOne";
    case ErrorCode::NonPsdCovariance: return "NonPsdCovariance";
    case ErrorCode::OutsideExistenceRegion: return "OutsideExistenceRegion";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InconsistentEta: return "InconsistentEta";
    case ErrorCode::KappaMismatch: return "KappaMismatch";
    case ErrorCode::AlreadySeparable: return "AlreadySeparable";
    case ErrorCode::FrontierOutOfRange: return "FrontierOutOfRange";
  }
  return "Unknown";
}

inline ErrorCategory category(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::KappaMismatch:
      return ErrorCategory::Usage;
    case ErrorCode::FileNotFound:
    case ErrorCode::ParseError:
    case ErrorCode::MissingValue:
    case ErrorCode::NonBinaryOutcome:
    case ErrorCode::ConstantColumn:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numerical;
  }
}

/// Exception carrying a machine-readable code and, for per-row failures,
/// the offending row index.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(message), code_(code), index_(index) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return sloe::category(code_); }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> index_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(ErrorCode::InvalidArgument, message);
}

}  // namespace sloe
