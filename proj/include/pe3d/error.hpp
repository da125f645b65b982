// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pe3d {

enum class ErrorCode {
  kNonInvertibleIntrinsics,
  kInvalidRotation,
  kInvalidCamera,
  kNonPositiveDepth,
  kBehindCamera,
  kInvalidRegion,
  kInvalidRange,
  kTooFewBins,
  kOutOfRange,
  kKTooLarge,
  kShapeMismatch,
  kNoValidPixels,
  kEmptySparseMap,
  kAllTokensMasked,
  kZeroReferenceVector,
  kEmptyRegion,
  kInvalidArgument,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so callers
/// (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pe3d
