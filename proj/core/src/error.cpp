// Copyright 2026 The keypatch Authors
// SPDX-License-Identifier: Apache-2.0

#include "keypatch/error.hpp"

namespace keypatch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kConstraintInfeasible: return "constraint-infeasible";
    case ErrorCode::kDegenerateProjection: return "degenerate-projection";
    case ErrorCode::kOutOfBoundsPlacement: return "out-of-bounds-placement";
    case ErrorCode::kEmptyCorpus: return "empty-corpus";
    case ErrorCode::kAnnotationInconsistent: return "annotation-inconsistent";
    case ErrorCode::kUnsupportedFormat: return "unsupported-format";
    case ErrorCode::kRecordCorrupt: return "record-corrupt";
    case ErrorCode::kShapeError: return "shape-error";
    case ErrorCode::kWeightMismatch: return "weight-mismatch";
    case ErrorCode::kNumericError: return "numeric-error";
    case ErrorCode::kTrainingDiverged: return "training-diverged";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace keypatch
