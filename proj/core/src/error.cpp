// SPDX-License-Identifier: Apache-2.0
#include "ntd/error.hpp"

namespace ntd {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported-version";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kDimMismatch: return "dim-mismatch";
    case ErrorCode::kOverflow: return "overflow";
    case ErrorCode::kUnknownClass: return "unknown-class";
    case ErrorCode::kInsufficientRecords: return "insufficient-records";
    case ErrorCode::kClassTooSmall: return "class-too-small";
    case ErrorCode::kZeroNorm: return "zero-norm";
    case ErrorCode::kConstantVector: return "constant-vector";
    case ErrorCode::kDegenerateDenominator: return "degenerate-denominator";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kDegenerateVariance: return "degenerate-variance";
    case ErrorCode::kNonPositiveSupport: return "non-positive-support";
    case ErrorCode::kMetricMismatch: return "metric-mismatch";
    case ErrorCode::kNoThreshold: return "no-threshold";
    case ErrorCode::kInfeasibleGeometry: return "infeasible-geometry";
    case ErrorCode::kSessionClosed: return "session-closed";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kProtocol: return "protocol";
  }
  return "unknown";
}

}  // namespace ntd
