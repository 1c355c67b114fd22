// SPDX-License-Identifier: Apache-2.0
#include "gcrf/evaluation.hpp"

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/metrics.hpp"
#include "gcrf/synthetic.hpp"

namespace gcrf {

PropagateOptions evaluation_propagate_options(int grid) {
  PropagateOptions opts;
  opts.grid_w = grid;
  opts.grid_h = grid;
  BaselineEmbeddingSource src;
  src.weights = {4.0, 2.0, 2.0, 0.0, 0.0};
  opts.embeddings = src;
  opts.similarity = {0.1, true};
  return opts;
}

void ControllabilityConfig::validate() const {
  if (points.empty()) throw Error(ErrorKind::kBadInput, "no point counts given");
  for (int n : points) {
    if (n < 1) throw Error(ErrorKind::kBadInput, "point counts must be >= 1");
    if (n > propagate.grid_w * propagate.grid_h) throw Error(ErrorKind::kBadInput, "more points than grid cells");
  }
  if (patch < 1 || patch % 2 == 0) throw Error(ErrorKind::kBadInput, "patch size must be odd and >= 1");
  if (seeds < 1) throw Error(ErrorKind::kBadInput, "seeds must be >= 1");
  if (!(beta > 0.0)) throw Error(ErrorKind::kBadInput, "beta must be > 0");
}

ControllabilityReport run_controllability(std::span<const EvalImage> images, const ControllabilityConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw Error(ErrorKind::kBadInput, "no evaluation images");
  ControllabilityReport report;
  for (int n : cfg.points) report.rows.push_back({n, 0.0, 0, 0});

  const int gw = cfg.propagate.grid_w;
  const int gh = cfg.propagate.grid_h;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const GrayImage gray = resample(images[i].gray, gw, gh);
    const ColorFieldLab truth = resample(images[i].chroma, gw, gh);
    const PreparedImage prepared = prepare_image(gray, cfg.propagate);
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = cfg.seed * 1000003ULL + i * 7919ULL + static_cast<std::uint64_t>(s);
      for (ControllabilityRow& row : report.rows) {
        const EditSet edits = reveal_patches(truth, row.points, cfg.patch, seed, cfg.mode, cfg.beta);
        try {
          const PropagateResult r = propagate(prepared, edits, cfg.propagate);
          row.mean_psnr += chroma_psnr(r.grid_chroma, truth);
          ++row.solved;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kSingularSystem) throw;
          ++row.singular;
        }
      }
    }
  }
  for (ControllabilityRow& row : report.rows) {
    if (row.solved > 0) row.mean_psnr /= row.solved;
  }
  return report;
}

std::vector<EvalImage> synthetic_eval_images(int count, int size, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorKind::kBadInput, "image count must be >= 1");
  std::vector<EvalImage> out;
  for (int i = 0; i < count; ++i) {
    SyntheticImage img = region_image(size, 2 + i % 3, seed + static_cast<std::uint64_t>(i));
    out.push_back({std::move(img.gray), std::move(img.chroma)});
  }
  return out;
}

}  // namespace gcrf
