#include "induce/error.hpp"

namespace induce {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptySentence: return "EmptySentence";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kAlignment: return "AlignmentError";
    case ErrorCode::kMalformedTree: return "MalformedTree";
    case ErrorCode::kFormat: return "FormatError";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kNonScalarRoot: return "NonScalarRoot";
    case ErrorCode::kNonDeterministicLoss: return "NonDeterministicLoss";
    case ErrorCode::kUnnormalizedFamily: return "UnnormalizedFamily";
    case ErrorCode::kTooLong: return "TooLong";
    case ErrorCode::kUnproductiveGrammar: return "UnproductiveGrammar";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kLeafMismatch: return "LeafMismatch";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kTooFewRuns: return "TooFewRuns";
    case ErrorCode::kModeUnsupported: return "ModeUnsupported";
    case ErrorCode::kTrainingDiverged: return "TrainingDiverged";
    case ErrorCode::kZeroProbability: return "ZeroProbability";
  }
  return "Error";
}

}  // namespace induce
