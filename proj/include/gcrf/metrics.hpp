// SPDX-License-Identifier: Apache-2.0
//
// Image-quality and diversity metrics. Chroma-based metrics first map
// native Lab a*/b* onto [0,1] via (v / kChromaScale + 1) / 2.
#pragma once

#include <span>
#include <vector>

#include "gcrf/image.hpp"

namespace gcrf {

/// Reported value for identical inputs.
inline constexpr double kPsnrCap = 99.0;
inline constexpr int kSsimWindow = 8;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

double mse(std::span<const double> x, std::span<const double> y);
/// 10 log10(1 / MSE) for signals on [0,1]; kPsnrCap when MSE is 0.
double psnr(std::span<const double> x, std::span<const double> y);
double psnr_from_mse(double mse_value);

/// SSIM with a uniform 8x8 window at stride 1, averaged over all window
/// positions. Throws kTooSmall below 8x8.
double ssim(std::span<const double> x, std::span<const double> y, int width, int height);

std::vector<double> unit_chroma(std::span<const double> native);

/// PSNR over both chroma channels on the [0,1] scale.
double chroma_psnr(const ColorFieldLab& x, const ColorFieldLab& y);
/// PSNR over RGB channels, each 8-bit value divided by 255.
double rgb_psnr(const RgbImage& x, const RgbImage& y);

struct SampleSet {
  std::vector<ColorFieldLab> samples;
  ColorFieldLab ground_truth;
};

/// Mean over pixels of min over samples of the channel-averaged squared
/// chroma error.
double error_of_best(const SampleSet& set);

struct Diversity {
  double variance = 0.0;            ///< mean per-pixel, per-channel variance across samples
  double mean_pairwise_ssim = 1.0;  ///< over unordered pairs, averaged over a/b
};

/// Throws kNeedTwoSamples for fewer than two samples.
Diversity diversity(std::span<const ColorFieldLab> samples);

}  // namespace gcrf
