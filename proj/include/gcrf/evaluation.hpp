// SPDX-License-Identifier: Apache-2.0
//
// Revealed-patch controllability protocol: reveal n ground-truth patches,
// propagate them with the G-CRF and score the result against the truth.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gcrf/edits.hpp"
#include "gcrf/image.hpp"

namespace gcrf {

/// Propagation settings used by the protocol: column-normalized baseline
/// embeddings with weights (4, 2, 2, 0, 0) at temperature 0.1.
PropagateOptions evaluation_propagate_options(int grid = kDefaultGrid);

struct EvalImage {
  GrayImage gray;
  ColorFieldLab chroma;  ///< native units, same size as gray
};

struct ControllabilityConfig {
  std::vector<int> points{10, 50, 100};
  int patch = 7;
  int seeds = 3;  ///< reveal draws per image and point count
  std::uint64_t seed = 1;
  PatchMode mode = PatchMode::kCenterMean;
  double beta = kTestBeta;
  PropagateOptions propagate = evaluation_propagate_options();

  void validate() const;
};

struct ControllabilityRow {
  int points = 0;
  double mean_psnr = 0.0;  ///< over the solved runs
  int solved = 0;
  int singular = 0;
};

struct ControllabilityReport {
  std::vector<ControllabilityRow> rows;
};

/// Images are resampled to the propagation grid before anything else.
ControllabilityReport run_controllability(std::span<const EvalImage> images, const ControllabilityConfig& cfg);

/// count region images of size x size with 2, 3, 4, 2, ... regions.
std::vector<EvalImage> synthetic_eval_images(int count, int size, std::uint64_t seed);

}  // namespace gcrf
