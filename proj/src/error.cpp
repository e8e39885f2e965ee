#include "root_opt/error.hpp"

namespace root_opt {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kInvalidHorizon: return "InvalidHorizon";
    case ErrorCode::kInvalidDimension: return "InvalidDimension";
    case ErrorCode::kInvalidCoverage: return "InvalidCoverage";
    case ErrorCode::kUnknownTask: return "UnknownTask";
    case ErrorCode::kEmptySubset: return "EmptySubset";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kFactorizationFailure: return "FactorizationFailure";
    case ErrorCode::kNonFiniteIterate: return "NonFiniteIterate";
    case ErrorCode::kNumericalOverflow: return "NumericalOverflow";
    case ErrorCode::kSingularMarginal: return "SingularMarginal";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kEmptySyntheticData: return "EmptySyntheticData";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kFingerprintMismatch: return "FingerprintMismatch";
  }
  return "Unknown";
}

int exit_status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFiniteInput:
    case ErrorCode::kFactorizationFailure:
    case ErrorCode::kNonFiniteIterate:
    case ErrorCode::kNumericalOverflow:
    case ErrorCode::kSingularMarginal:
    case ErrorCode::kNonFiniteLoss:
    case ErrorCode::kEmptySyntheticData:
      return 2;
    case ErrorCode::kIo:
    case ErrorCode::kVersionMismatch:
    case ErrorCode::kCorruptCheckpoint:
    case ErrorCode::kFingerprintMismatch:
      return 3;
    default:
      return 1;
  }
}

}  // namespace root_opt
