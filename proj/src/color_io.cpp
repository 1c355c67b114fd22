// SPDX-License-Identifier: Apache-2.0
#include "gcrf/color_io.hpp"

#include <algorithm>
#include <cmath>

#include "gcrf/error.hpp"

namespace gcrf {
namespace {

// IEC 61966-2-1 sRGB primaries to XYZ.
constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

struct Whitepoint {
  double x, y, z;
};

// The reference white is the image of linear (1,1,1), so sRGB white maps to
// L=100, a=b=0 with no residual from rounded D65 tristimulus constants.
constexpr Whitepoint kWhite{
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

constexpr double kDelta = 6.0 / 29.0;

struct Mat3 {
  double m[3][3];
};

Mat3 invert(const double (&a)[3][3]) {
  const double det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                     a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                     a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  Mat3 r{};
  r.m[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
  r.m[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
  r.m[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
  r.m[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
  r.m[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
  r.m[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
  r.m[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
  r.m[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
  r.m[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
  return r;
}

const Mat3& xyz_to_rgb() {
  static const Mat3 inv = invert(kRgbToXyz);
  return inv;
}

double linearize(std::uint8_t v) {
  const double c = v / 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double encode_gamma(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

// Per-axis resampling of a strided line.
void resample_line(const double* src, int src_n, std::ptrdiff_t src_stride, double* dst, int dst_n,
                   std::ptrdiff_t dst_stride) {
  if (src_n == dst_n) {
    for (int i = 0; i < dst_n; ++i) dst[i * dst_stride] = src[i * src_stride];
    return;
  }
  if (dst_n < src_n) {
    const double ratio = static_cast<double>(src_n) / dst_n;
    for (int i = 0; i < dst_n; ++i) {
      const double lo = i * ratio;
      const double hi = (i + 1) * ratio;
      double acc = 0.0;
      for (int s = static_cast<int>(std::floor(lo)); s < src_n && s < hi; ++s) {
        const double overlap = std::min<double>(hi, s + 1) - std::max<double>(lo, s);
        if (overlap > 0) acc += overlap * src[s * src_stride];
      }
      dst[i * dst_stride] = acc / ratio;
    }
    return;
  }
  if (src_n == 1) {
    for (int i = 0; i < dst_n; ++i) dst[i * dst_stride] = src[0];
    return;
  }
  const double step = static_cast<double>(src_n - 1) / (dst_n - 1);
  for (int i = 0; i < dst_n; ++i) {
    const double pos = i * step;
    int left = std::min(static_cast<int>(std::floor(pos)), src_n - 2);
    const double t = pos - left;
    dst[i * dst_stride] = (1.0 - t) * src[left * src_stride] + t * src[(left + 1) * src_stride];
  }
}

}  // namespace

Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double rgb[3] = {linearize(r), linearize(g), linearize(b)};
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kRgbToXyz[i][0] * rgb[0] + kRgbToXyz[i][1] * rgb[1] + kRgbToXyz[i][2] * rgb[2];
  }
  const double fx = lab_f(xyz[0] / kWhite.x);
  const double fy = lab_f(xyz[1] / kWhite.y);
  const double fz = lab_f(xyz[2] / kWhite.z);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

Srgb8 lab_to_srgb(double L, double a, double b) {
  const double fy = (L + 16.0) / 116.0;
  const double xyz[3] = {lab_f_inv(fy + a / 500.0) * kWhite.x, lab_f_inv(fy) * kWhite.y,
                         lab_f_inv(fy - b / 200.0) * kWhite.z};
  const auto& m = xyz_to_rgb().m;
  Srgb8 out;
  std::uint8_t* channels[3] = {&out.r, &out.g, &out.b};
  for (int i = 0; i < 3; ++i) {
    double lin = m[i][0] * xyz[0] + m[i][1] * xyz[1] + m[i][2] * xyz[2];
    if (lin < -1e-9 || lin > 1.0 + 1e-9) out.clamped = true;
    lin = std::clamp(lin, 0.0, 1.0);
    *channels[i] = static_cast<std::uint8_t>(std::lround(255.0 * encode_gamma(lin)));
  }
  return out;
}

std::vector<double> resample_plane(std::span<const double> src, int src_w, int src_h, int dst_w,
                                   int dst_h) {
  if (dst_w < 1 || dst_h < 1) throw Error(ErrorKind::kBadInput, "resample target must be >= 1");
  if (src.size() != static_cast<std::size_t>(src_w) * src_h) {
    throw Error(ErrorKind::kBadInput, "resample source size mismatch");
  }
  std::vector<double> tmp(static_cast<std::size_t>(dst_w) * src_h);
  for (int r = 0; r < src_h; ++r) {
    resample_line(src.data() + static_cast<std::size_t>(r) * src_w, src_w, 1,
                  tmp.data() + static_cast<std::size_t>(r) * dst_w, dst_w, 1);
  }
  std::vector<double> out(static_cast<std::size_t>(dst_w) * dst_h);
  for (int c = 0; c < dst_w; ++c) {
    resample_line(tmp.data() + c, src_h, dst_w, out.data() + c, dst_h, dst_w);
  }
  return out;
}

GrayImage resample(const GrayImage& img, int target_w, int target_h) {
  GrayImage out;
  out.width = target_w;
  out.height = target_h;
  out.intensity = resample_plane(img.intensity, img.width, img.height, target_w, target_h);
  return out;
}

ColorFieldLab resample(const ColorFieldLab& field, int target_w, int target_h) {
  ColorFieldLab out;
  out.width = target_w;
  out.height = target_h;
  out.a = resample_plane(field.a, field.width, field.height, target_w, target_h);
  out.b = resample_plane(field.b, field.width, field.height, target_w, target_h);
  return out;
}

void split_lab(const RgbImage& rgb, GrayImage& gray, ColorFieldLab& chroma) {
  gray = GrayImage(rgb.width, rgb.height);
  chroma = ColorFieldLab(rgb.width, rgb.height);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const Lab lab = srgb_to_lab(rgb.data[3 * i], rgb.data[3 * i + 1], rgb.data[3 * i + 2]);
    gray.intensity[i] = std::clamp(lab.L / 100.0, 0.0, 1.0);
    chroma.a[i] = lab.a;
    chroma.b[i] = lab.b;
  }
}

GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g;
  ColorFieldLab c;
  split_lab(rgb, g, c);
  return g;
}

ColorFieldLab to_chroma(const RgbImage& rgb) {
  GrayImage g;
  ColorFieldLab c;
  split_lab(rgb, g, c);
  return c;
}

RgbImage compose_rgb(const GrayImage& gray, const ColorFieldLab& chroma, std::size_t* clamped_pixels) {
  if (gray.width != chroma.width || gray.height != chroma.height) {
    throw Error(ErrorKind::kBadInput, "luminance and chroma sizes differ");
  }
  RgbImage out(gray.width, gray.height);
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const Srgb8 px = lab_to_srgb(100.0 * gray.intensity[i], chroma.a[i], chroma.b[i]);
    clamped += px.clamped ? 1 : 0;
    out.data[3 * i] = px.r;
    out.data[3 * i + 1] = px.g;
    out.data[3 * i + 2] = px.b;
  }
  if (clamped_pixels) *clamped_pixels = clamped;
  return out;
}

RgbImage gray_to_rgb(const GrayImage& gray) {
  return compose_rgb(gray, ColorFieldLab(gray.width, gray.height));
}

}  // namespace gcrf
