/*
 * Copyright 2026 The DeviceScope Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace devicescope {

enum class ErrorCode {
  kMalformedRow,
  kDuplicateTimestamp,
  kNonMonotonicTimestamp,
  kUpsamplingRequested,
  kLengthMismatch,
  kShapeMismatch,
  kNoGroundTruthAvailable,
  kInvalidConfig,
  kInvalidArgument,
  kNonFiniteValue,
  kNonFiniteLoss,
  kSingleClassTrainingSet,
  kEmptyInput,
  kHouseOverlap,
  kVersionMismatch,
  kIoError,
  kNotFound,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRow: return "malformed_row";
    case ErrorCode::kDuplicateTimestamp: return "duplicate_timestamp";
    case ErrorCode::kNonMonotonicTimestamp: return "non_monotonic_timestamp";
    case ErrorCode::kUpsamplingRequested: return "upsampling_requested";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kNoGroundTruthAvailable: return "no_ground_truth_available";
    case ErrorCode::kInvalidConfig: return "invalid_config";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kNonFiniteValue: return "non_finite_value";
    case ErrorCode::kNonFiniteLoss: return "non_finite_loss";
    case ErrorCode::kSingleClassTrainingSet: return "single_class_training_set";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kHouseOverlap: return "house_overlap";
    case ErrorCode::kVersionMismatch: return "version_mismatch";
    case ErrorCode::kIoError: return "io_error";
    case ErrorCode::kNotFound: return "not_found";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Explicit marker for a missing power reading.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace devicescope
