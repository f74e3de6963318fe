// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ntd {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kBadMagic,
  kUnsupportedVersion,
  kTruncated,
  kNonFinite,
  kDimMismatch,
  kOverflow,
  kUnknownClass,
  kInsufficientRecords,
  kClassTooSmall,
  kZeroNorm,
  kConstantVector,
  kDegenerateDenominator,
  kLengthMismatch,
  kEmptyInput,
  kDegenerateVariance,
  kNonPositiveSupport,
  kMetricMismatch,
  kNoThreshold,
  kInfeasibleGeometry,
  kSessionClosed,
  kParse,
  kProtocol,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. The code lets callers (and the CLI
/// exit-code mapping) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ntd
