// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of the G-CRF backward pass on random
// small systems. Loss: sum over channels of 0.5 |x_c - t_c|^2.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gcrf {

struct GradcheckConfig {
  std::uint64_t seed = 1;
  int instances = 100;
  int min_pixels = 4;
  int max_pixels = 36;
  int min_dim = 1;
  int max_dim = 8;
  double tolerance = 1e-5;
  double step = 1e-6;

  void validate() const;
};

struct GradcheckPath {
  std::string name;
  double max_error = 0.0;  ///< max over instances of |fd - analytic|_inf / |analytic|_inf
  long checks = 0;         ///< scalar comparisons
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckPath> paths;
  double tolerance = 0.0;
  bool pass() const;
};

/// Paths: rhs (dL/dB), alpha (dL/d alpha), hoc (dL/dA), similarity (dL/dS),
/// embeddings (dL/d embeddings, raw and column-normalized).
GradcheckReport run_gradcheck(const GradcheckConfig& cfg);

/// Fixed-width table, one line per path plus a verdict line.
std::string format_gradcheck(const GradcheckReport& report);

}  // namespace gcrf
