// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

namespace gcrf {

/// Luminance field, L* / 100 per pixel, row-major.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> intensity;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), intensity(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t size() const { return intensity.size(); }
  double& at(int row, int col) { return intensity[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return intensity[static_cast<std::size_t>(row) * width + col]; }
};

/// Two-channel chrominance field (a*, b*), row-major. Units depend on context:
/// native Lab for images, divided by kChromaScale inside the solver.
struct ColorFieldLab {
  int width = 0;
  int height = 0;
  std::vector<double> a;
  std::vector<double> b;

  ColorFieldLab() = default;
  ColorFieldLab(int w, int h)
      : width(w), height(h),
        a(static_cast<std::size_t>(w) * h, 0.0),
        b(static_cast<std::size_t>(w) * h, 0.0) {}

  std::size_t size() const { return a.size(); }
};

/// Interleaved 8-bit sRGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

  bool operator==(const RgbImage&) const = default;
};

}  // namespace gcrf
