// SPDX-License-Identifier: Apache-2.0
#include "gcrf/error.hpp"

namespace gcrf {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadInput: return "bad_input";
    case ErrorKind::kSingularSystem: return "singular_system";
    case ErrorKind::kGradcheckBreach: return "gradcheck_breach";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kOutOfBounds: return "out_of_bounds";
    case ErrorKind::kNoConvergence: return "no_convergence";
    case ErrorKind::kTooSmall: return "too_small";
    case ErrorKind::kNeedTwoSamples: return "need_two_samples";
    case ErrorKind::kResidualBreach: return "residual_breach";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kSingularSystem:
    case ErrorKind::kResidualBreach:
      return 3;
    case ErrorKind::kGradcheckBreach:
      return 4;
    case ErrorKind::kIo:
      return 5;
    default:
      return 2;
  }
}

}  // namespace gcrf
