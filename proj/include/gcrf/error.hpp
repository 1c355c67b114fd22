// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gcrf {

enum class ErrorKind {
  kBadInput,
  kSingularSystem,
  kGradcheckBreach,
  kIo,
  kOutOfBounds,
  kNoConvergence,
  kTooSmall,
  kNeedTwoSamples,
  kResidualBreach,
};

std::string_view error_kind_name(ErrorKind kind);

/// Process exit code for a failure of the given kind (0 is reserved for success).
int exit_code_for(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Thrown by to_constraints for an edit outside the grid; carries the edit index.
class OutOfBoundsError : public Error {
 public:
  OutOfBoundsError(std::size_t index, const std::string& message)
      : Error(ErrorKind::kOutOfBounds, message), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace gcrf
