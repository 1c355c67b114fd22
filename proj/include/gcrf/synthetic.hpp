// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic images with intensity-aligned color regions.
// Chroma is in native Lab units.
#pragma once

#include <cstdint>
#include <vector>

#include "gcrf/image.hpp"

namespace gcrf {

struct SyntheticImage {
  GrayImage gray;
  ColorFieldLab chroma;
  std::vector<int> region;  ///< region label per pixel
  int mode = -1;            ///< palette index for two-mode data
};

/// Left half at left_intensity, right half at right_intensity; chroma is
/// (a0, b0) on the left and (a1, b1) on the right.
SyntheticImage two_region_image(int width, int height, double left_intensity, double right_intensity,
                                double a0 = 40.0, double b0 = -30.0, double a1 = -25.0, double b1 = 45.0);

/// Voronoi partition into `regions` cells (2..4) with distinct intensities
/// and a per-region base color plus a smooth spatial chroma gradient.
SyntheticImage region_image(int size, int regions, std::uint64_t seed);

/// Same layout family (background plus one rectangle or disc), colored by
/// one of two fixed palettes chosen at random.
std::vector<SyntheticImage> two_mode_dataset(int count, int size, std::uint64_t seed);

/// The two palettes of two_mode_dataset: palette[mode] = {bg_a, bg_b, shape_a, shape_b}.
struct TwoModePalette {
  double bg_a, bg_b, shape_a, shape_b;
};
TwoModePalette two_mode_palette(int mode);

}  // namespace gcrf
