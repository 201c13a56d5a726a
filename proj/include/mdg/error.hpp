/* Copyright 2026 The MDG Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef MDG_ERROR_HPP_
#define MDG_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdg {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kInvalidDims,
  kNumericalError,
  kSingularGram,
  kEmptyBatch,
  kEmptyInput,
  kInvalidArgument,
  kInvalidRange,
  kTimestepOutOfRange,
  kTimestepOrder,
  kUnknownConcept,
  kConfigInvalid,
  kConfigParse,
  kInvariantViolation,
  kTooFewSamples,
  kNonFiniteInput,
  kSchemaMismatch,
  kIoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidDims: return "InvalidDims";
    case ErrorCode::kNumericalError: return "NumericalError";
    case ErrorCode::kSingularGram: return "SingularGram";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kTimestepOutOfRange: return "TimestepOutOfRange";
    case ErrorCode::kTimestepOrder: return "TimestepOrder";
    case ErrorCode::kUnknownConcept: return "UnknownConcept";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kConfigParse: return "ConfigParse";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

/// Process exit status for the command-line front end.
/// 0 success, 2 configuration, 3 runtime/numerical, 4 schema mismatch.
constexpr int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigInvalid:
    case ErrorCode::kConfigParse:
    case ErrorCode::kInvalidDims:
    case ErrorCode::kInvalidRange:
    case ErrorCode::kInvalidArgument:
      return 2;
    case ErrorCode::kSchemaMismatch:
      return 4;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mdg

#endif  // MDG_ERROR_HPP_
