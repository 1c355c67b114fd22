// SPDX-License-Identifier: Apache-2.0
//
// sRGB <-> CIE Lab (D65 white, 2 degree observer, IEC 61966-2-1 transfer
// curve), resampling between image and solver grids, and image files.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcrf/image.hpp"

namespace gcrf {

/// Native Lab chroma is divided by this before entering the solver.
inline constexpr double kChromaScale = 110.0;

struct Lab {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

struct Srgb8 {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool clamped = false;  ///< set when the Lab input was outside the sRGB gamut

  bool same_color(const Srgb8& o) const { return r == o.r && g == o.g && b == o.b; }
};

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b);
Srgb8 lab_to_srgb(double L, double a, double b);

/// Area-average when shrinking, bilinear (corner-aligned) when enlarging,
/// applied separably per axis. Same size is a copy.
std::vector<double> resample_plane(std::span<const double> src, int src_w, int src_h,
                                   int dst_w, int dst_h);
GrayImage resample(const GrayImage& img, int target_w, int target_h);
ColorFieldLab resample(const ColorFieldLab& field, int target_w, int target_h);

/// Splits an RGB image into its luminance (L*/100) and native-unit chroma.
void split_lab(const RgbImage& rgb, GrayImage& gray, ColorFieldLab& chroma);
GrayImage to_gray(const RgbImage& rgb);
ColorFieldLab to_chroma(const RgbImage& rgb);

/// Recombines luminance with native-unit chroma of the same size.
RgbImage compose_rgb(const GrayImage& gray, const ColorFieldLab& chroma,
                     std::size_t* clamped_pixels = nullptr);
RgbImage gray_to_rgb(const GrayImage& gray);

// Image files. PNG goes through libpng; binary PPM (P6) is built in.
RgbImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RgbImage& img);
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);

/// Dispatches on file signature (PNG magic or "P6").
RgbImage decode_image(std::span<const std::uint8_t> bytes);
RgbImage read_image(const std::filesystem::path& path);
/// Writes PPM for a ".ppm" extension, PNG otherwise.
void write_image(const std::filesystem::path& path, const RgbImage& img);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace gcrf
