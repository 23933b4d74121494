#ifndef UWLOC_COMMON_HPP
#define UWLOC_COMMON_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uwloc {

enum class ErrorCode {
  // signal / preprocessing
  EmptySignal,
  OddFrameLength,
  LabelLengthMismatch,
  DegenerateRange,
  // pca / regression
  TooFewRows,
  InvalidComponentCount,
  SingularNormalEquations,
  ZeroVarianceComponent,
  DimensionMismatch,
  EmptySelection,
  IndexOutOfRange,
  ZeroVarianceColumn,
  // dataset
  InvalidModulus,
  LengthMismatch,
  // nn
  ShapeMismatch,
  StaleCache,
  KernelExceedsInput,
  TooManyLayersForWidth,
  MissingCheckpoint,
  DivergenceDetected,
  DivisionByZero,
  // synth
  ToneAboveNyquist,
  SizeTooLarge,
  // cli / io
  UnknownKey,
  TypeError,
  IoError,
  ConfigError,
  MissingArtifact,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

// Independent, stable seed streams derived from one user-facing seed.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

}  // namespace uwloc

#endif  // UWLOC_COMMON_HPP
