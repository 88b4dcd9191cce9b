#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fta {

enum class ErrorCode {
  Empty,
  NegativeEntry,
  NotNormalized,
  DimensionMismatch,
  InfeasibleMarginals,
  NumericalFailure,
  ZeroNorm,
  TooFewViews,
  ConfigInvalid,
  IoError,
  FormatError,
  UnknownListing,
  EmptyIndex,
  MissingView,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InfeasibleMarginals: return "InfeasibleMarginals";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::UnknownListing: return "UnknownListing";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::MissingView: return "MissingView";
  }
  return "Unknown";
}

/// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fta
