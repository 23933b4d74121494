#include "uwloc/common.hpp"

namespace uwloc {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptySignal: return "EmptySignal";
    case ErrorCode::OddFrameLength: return "OddFrameLength";
    case ErrorCode::LabelLengthMismatch: return "LabelLengthMismatch";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::InvalidComponentCount: return "InvalidComponentCount";
    case ErrorCode::SingularNormalEquations: return "SingularNormalEquations";
    case ErrorCode::ZeroVarianceComponent: return "ZeroVarianceComponent";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::InvalidModulus: return "InvalidModulus";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::KernelExceedsInput: return "KernelExceedsInput";
    case ErrorCode::TooManyLayersForWidth: return "TooManyLayersForWidth";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::ToneAboveNyquist: return "ToneAboveNyquist";
    case ErrorCode::SizeTooLarge: return "SizeTooLarge";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::TypeError: return "TypeError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
  }
  return "UnknownError";
}

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  // splitmix64 finalizer over the seed/stream pair
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace uwloc
