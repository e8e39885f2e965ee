#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace root_opt {

enum class ErrorCode {
  // usage / configuration
  kInvalidArgument,
  kInvalidRange,
  kInvalidHorizon,
  kInvalidDimension,
  kInvalidCoverage,
  kUnknownTask,
  kEmptySubset,
  kInsufficientData,
  kDimensionMismatch,
  kShapeMismatch,
  kTimestepOutOfRange,
  // numerics
  kNonFiniteInput,
  kFactorizationFailure,
  kNonFiniteIterate,
  kNumericalOverflow,
  kSingularMarginal,
  kNonFiniteLoss,
  kEmptySyntheticData,
  // persistence
  kIo,
  kVersionMismatch,
  kCorruptCheckpoint,
  kFingerprintMismatch,
};

std::string_view error_code_name(ErrorCode code);

// Exit status for the CLI: 1 usage, 2 numeric failure, 3 I/O failure.
int exit_status_for(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace root_opt
