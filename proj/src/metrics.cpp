// SPDX-License-Identifier: Apache-2.0
#include "gcrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"

namespace gcrf {
namespace {

void check_same(const ColorFieldLab& x, const ColorFieldLab& y) {
  if (x.width != y.width || x.height != y.height || x.a.size() != y.a.size() || x.b.size() != y.b.size()) {
    throw Error(ErrorKind::kBadInput, "chroma fields differ in size");
  }
}

double unit(double v) { return (v / kChromaScale + 1.0) * 0.5; }

}  // namespace

double mse(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw Error(ErrorKind::kBadInput, "mse: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<double>(x.size());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double psnr(std::span<const double> x, std::span<const double> y) { return psnr_from_mse(mse(x, y)); }

double ssim(std::span<const double> x, std::span<const double> y, int width, int height) {
  if (width < kSsimWindow || height < kSsimWindow) {
    throw Error(ErrorKind::kTooSmall, "ssim needs at least 8x8 pixels");
  }
  if (x.size() != static_cast<std::size_t>(width) * height || y.size() != x.size()) {
    throw Error(ErrorKind::kBadInput, "ssim: size mismatch");
  }
  constexpr double n = kSsimWindow * kSsimWindow;
  double total = 0.0;
  int windows = 0;
  for (int r0 = 0; r0 + kSsimWindow <= height; ++r0) {
    for (int c0 = 0; c0 + kSsimWindow <= width; ++c0) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int r = r0; r < r0 + kSsimWindow; ++r) {
        for (int c = c0; c < c0 + kSsimWindow; ++c) {
          const double a = x[static_cast<std::size_t>(r) * width + c];
          const double b = y[static_cast<std::size_t>(r) * width + c];
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double mx = sx / n, my = sy / n;
      // Unclamped so that identical windows give exactly 1.
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cxy = sxy / n - mx * my;
      total += ((2 * mx * my + kSsimC1) * (2 * cxy + kSsimC2)) /
               ((mx * mx + my * my + kSsimC1) * (vx + vy + kSsimC2));
      ++windows;
    }
  }
  return total / windows;
}

std::vector<double> unit_chroma(std::span<const double> native) {
  std::vector<double> out(native.size());
  std::transform(native.begin(), native.end(), out.begin(), unit);
  return out;
}

double chroma_psnr(const ColorFieldLab& x, const ColorFieldLab& y) {
  check_same(x, y);
  const double m = 0.5 * (mse(unit_chroma(x.a), unit_chroma(y.a)) + mse(unit_chroma(x.b), unit_chroma(y.b)));
  return psnr_from_mse(m);
}

double rgb_psnr(const RgbImage& x, const RgbImage& y) {
  if (x.width != y.width || x.height != y.height) throw Error(ErrorKind::kBadInput, "rgb_psnr: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double d = (static_cast<double>(x.data[i]) - y.data[i]) / 255.0;
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(x.data.size()));
}

double error_of_best(const SampleSet& set) {
  if (set.samples.empty()) throw Error(ErrorKind::kBadInput, "error_of_best needs at least one sample");
  for (const auto& s : set.samples) check_same(s, set.ground_truth);
  const std::size_t p = set.ground_truth.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    const double ga = unit(set.ground_truth.a[i]);
    const double gb = unit(set.ground_truth.b[i]);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : set.samples) {
      const double da = unit(s.a[i]) - ga;
      const double db = unit(s.b[i]) - gb;
      best = std::min(best, 0.5 * (da * da + db * db));
    }
    acc += best;
  }
  return acc / static_cast<double>(p);
}

Diversity diversity(std::span<const ColorFieldLab> samples) {
  if (samples.size() < 2) throw Error(ErrorKind::kNeedTwoSamples, "diversity needs at least two samples");
  for (const auto& s : samples) check_same(s, samples[0]);
  const std::size_t p = samples[0].size();
  const double n = static_cast<double>(samples.size());

  std::vector<std::vector<double>> ua, ub;
  for (const auto& s : samples) {
    ua.push_back(unit_chroma(s.a));
    ub.push_back(unit_chroma(s.b));
  }
  double var_acc = 0.0;
  for (std::size_t i = 0; i < p; ++i) {
    for (const auto* channel : {&ua, &ub}) {
      // Population variance as the mean squared pairwise difference / 2,
      // which is exactly zero for identical samples.
      double v = 0.0;
      for (std::size_t j = 0; j < channel->size(); ++j) {
        for (std::size_t k = j + 1; k < channel->size(); ++k) {
          const double d = (*channel)[j][i] - (*channel)[k][i];
          v += d * d;
        }
      }
      var_acc += v / (n * n);
    }
  }
  Diversity out;
  out.variance = var_acc / (2.0 * static_cast<double>(p));

  const int w = samples[0].width, h = samples[0].height;
  double ssim_acc = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      ssim_acc += 0.5 * (ssim(ua[i], ua[j], w, h) + ssim(ub[i], ub[j], w, h));
      ++pairs;
    }
  }
  out.mean_pairwise_ssim = ssim_acc / pairs;
  return out;
}

}  // namespace gcrf
