#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace induce {

enum class ErrorCode {
  kEmptySentence,
  kEmptyInput,
  kIo,
  kAlignment,
  kMalformedTree,
  kFormat,
  kDimMismatch,
  kNonScalarRoot,
  kNonDeterministicLoss,
  kUnnormalizedFamily,
  kTooLong,
  kUnproductiveGrammar,
  kNonFiniteGradient,
  kConfig,
  kLeafMismatch,
  kZeroVariance,
  kTooFewRuns,
  kModeUnsupported,
  kTrainingDiverged,
  kZeroProbability,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace induce
