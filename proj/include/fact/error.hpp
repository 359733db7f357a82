// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fact {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kParse,
  kUnknownColumn,
  kEmptySplit,
  kOutOfRange,
  kDimensionMismatch,
  kNonFinite,
  kDivergence,
  kNoUnknownFeatures,
  kAlreadyKnown,
  kNotFound,
  kConflict,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// the CLI and the HTTP layer can map it to exit codes and status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fact
