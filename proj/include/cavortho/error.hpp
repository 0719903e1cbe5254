#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cavortho {

enum class ErrorCode {
  InvalidMatrix,
  DegenerateVector,
  SingleClassConcept,
  UndefinedMetric,
  InvalidConfig,
  InfeasibleCorrelation,
  NonFiniteLoss,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::DegenerateVector: return "DegenerateVector";
    case ErrorCode::SingleClassConcept: return "SingleClassConcept";
    case ErrorCode::UndefinedMetric: return "UndefinedMetric";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InfeasibleCorrelation: return "InfeasibleCorrelation";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Process exit status for an error category: 2 validation, 3 numeric
/// divergence, 4 IO.
constexpr int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteLoss: return 3;
    case ErrorCode::IoError: return 4;
    default: return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cavortho
