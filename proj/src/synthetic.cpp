// SPDX-License-Identifier: Apache-2.0
#include "gcrf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gcrf/error.hpp"
#include "gcrf/random.hpp"

namespace gcrf {

SyntheticImage two_region_image(int width, int height, double left_intensity, double right_intensity, double a0,
                                double b0, double a1, double b1) {
  if (width < 2 || height < 1) throw Error(ErrorKind::kBadInput, "two_region_image needs width >= 2");
  SyntheticImage img;
  img.gray = GrayImage(width, height);
  img.chroma = ColorFieldLab(width, height);
  img.region.assign(img.gray.size(), 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const std::size_t p = static_cast<std::size_t>(r) * width + c;
      const bool right = c >= width / 2;
      img.gray.intensity[p] = right ? right_intensity : left_intensity;
      img.chroma.a[p] = right ? a1 : a0;
      img.chroma.b[p] = right ? b1 : b0;
      img.region[p] = right ? 1 : 0;
    }
  }
  return img;
}

SyntheticImage region_image(int size, int regions, std::uint64_t seed) {
  if (regions < 2 || regions > 4) throw Error(ErrorKind::kBadInput, "region_image supports 2..4 regions");
  if (size < 4) throw Error(ErrorKind::kBadInput, "region_image needs size >= 4");
  Rng rng(seed);
  struct Site {
    double x, y, intensity, a, b, grad_a, grad_b;
  };
  std::vector<Site> sites(regions);
  // Evenly spaced intensity levels in random order keep regions separable.
  std::vector<double> levels;
  for (int i = 0; i < regions; ++i) levels.push_back(0.2 + 0.6 * i / (regions - 1));
  for (int i = regions - 1; i > 0; --i) std::swap(levels[i], levels[rng.below(i + 1)]);
  for (int i = 0; i < regions; ++i) {
    Site& s = sites[i];
    s.x = rng.uniform();
    s.y = rng.uniform();
    s.intensity = levels[i];
    s.a = -40.0 + 80.0 * rng.uniform();
    s.b = -40.0 + 80.0 * rng.uniform();
    s.grad_a = -80.0 + 160.0 * rng.uniform();
    s.grad_b = -80.0 + 160.0 * rng.uniform();
  }
  SyntheticImage img;
  img.gray = GrayImage(size, size);
  img.chroma = ColorFieldLab(size, size);
  img.region.assign(img.gray.size(), 0);
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double x = (c + 0.5) / size;
      const double y = (r + 0.5) / size;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < regions; ++i) {
        const double d = (x - sites[i].x) * (x - sites[i].x) + (y - sites[i].y) * (y - sites[i].y);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      const Site& s = sites[best];
      const std::size_t p = static_cast<std::size_t>(r) * size + c;
      img.region[p] = best;
      img.gray.intensity[p] = s.intensity;
      img.chroma.a[p] = s.a + s.grad_a * (x - 0.5);
      img.chroma.b[p] = s.b + s.grad_b * (y - 0.5);
    }
  }
  return img;
}

TwoModePalette two_mode_palette(int mode) {
  return mode == 0 ? TwoModePalette{30.0, -20.0, -40.0, 50.0} : TwoModePalette{-35.0, 25.0, 45.0, -45.0};
}

std::vector<SyntheticImage> two_mode_dataset(int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 4) throw Error(ErrorKind::kBadInput, "two_mode_dataset needs count >= 1, size >= 4");
  Rng rng(seed);
  constexpr double kBackground = 0.3;
  constexpr double kShape = 0.7;
  std::vector<SyntheticImage> out;
  for (int n = 0; n < count; ++n) {
    SyntheticImage img;
    img.mode = static_cast<int>(rng.below(2));
    const TwoModePalette pal = two_mode_palette(img.mode);
    img.gray = GrayImage(size, size, kBackground);
    img.chroma = ColorFieldLab(size, size);
    img.region.assign(img.gray.size(), 0);
    const bool disc = rng.below(2) == 1;
    const double extent = size * (0.25 + 0.2 * rng.uniform());
    const double cx = extent + (size - 2 * extent) * rng.uniform();
    const double cy = extent + (size - 2 * extent) * rng.uniform();
    for (int r = 0; r < size; ++r) {
      for (int c = 0; c < size; ++c) {
        const double dx = c + 0.5 - cx;
        const double dy = r + 0.5 - cy;
        const bool inside = disc ? dx * dx + dy * dy <= extent * extent
                                 : std::abs(dx) <= extent && std::abs(dy) <= 0.7 * extent;
        const std::size_t p = static_cast<std::size_t>(r) * size + c;
        img.region[p] = inside ? 1 : 0;
        img.gray.intensity[p] = inside ? kShape : kBackground;
        img.chroma.a[p] = inside ? pal.shape_a : pal.bg_a;
        img.chroma.b[p] = inside ? pal.shape_b : pal.bg_b;
      }
    }
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace gcrf
