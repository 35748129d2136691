// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace keypatch {

enum class ErrorCode {
  kInvalidArgument,
  kConstraintInfeasible,
  kDegenerateProjection,
  kOutOfBoundsPlacement,
  kEmptyCorpus,
  kAnnotationInconsistent,
  kUnsupportedFormat,
  kRecordCorrupt,
  kShapeError,
  kWeightMismatch,
  kNumericError,
  kTrainingDiverged,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace keypatch
