#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sonotrack {

enum class ErrorCode {
  kNotARotation,
  kTooShort,
  kBadDims,
  kBadSpec,
  kOutOfVolume,
  kTooShortAfterAugment,
  kIo,
  kFormatVersionMismatch,
  kChecksumMismatch,
  kShapeMismatch,
  kInvalidScan,
  kStateMismatch,
  kNoGroundTruth,
  kDivergence,
  kLengthMismatch,
  kDegenerateLength,
  kEmptyTrajectory,
  kBadConfig,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotARotation: return "NotARotation";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kBadDims: return "BadDims";
    case ErrorCode::kBadSpec: return "BadSpec";
    case ErrorCode::kOutOfVolume: return "OutOfVolume";
    case ErrorCode::kTooShortAfterAugment: return "TooShortAfterAugment";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvalidScan: return "InvalidScan";
    case ErrorCode::kStateMismatch: return "StateMismatch";
    case ErrorCode::kNoGroundTruth: return "NoGroundTruth";
    case ErrorCode::kDivergence: return "Divergence";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDegenerateLength: return "DegenerateLength";
    case ErrorCode::kEmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::kBadConfig: return "BadConfig";
  }
  return "Unknown";
}

}  // namespace sonotrack
