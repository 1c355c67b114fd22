// SPDX-License-Identifier: Apache-2.0
//
// Sparse user edits -> (H, alpha, beta), and edit propagation through the
// G-CRF. Edit coordinates live on the solver grid; colors are native Lab a*/b*.
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gcrf/image.hpp"
#include "gcrf/similarity.hpp"
#include "gcrf/system.hpp"

namespace gcrf {

inline constexpr double kTrainBeta = 1.0;
inline constexpr double kTestBeta = 5.0;
inline constexpr int kDefaultGrid = 32;

struct Edit {
  int row = 0;
  int col = 0;
  double a = 0.0;
  double b = 0.0;

  bool operator==(const Edit&) const = default;
};

struct EditSet {
  std::vector<Edit> edits;
  double beta = kTestBeta;

  bool operator==(const EditSet&) const = default;
};

/// mask = 1 exactly at edited pixels (last write wins on duplicates);
/// targets are chroma / kChromaScale. Throws OutOfBoundsError.
Constraints to_constraints(const EditSet& edits, int grid_w, int grid_h);

/// Canonical edits document: {"beta":..,"edits":[{"row":..,"col":..,"a":..,"b":..},..]}
/// with keys in that order and no whitespace.
std::string edits_to_json(const EditSet& edits);

/// Validates the schema; "beta" is optional (defaults to kTestBeta) and
/// *has_beta reports whether it was present.
EditSet parse_edits_json(std::string_view text, bool* has_beta = nullptr);

struct BaselineEmbeddingSource {
  int dim = 5;
  BaselineFeatureWeights weights{};
};

using EmbeddingSource = std::variant<BaselineEmbeddingSource, PixelEmbeddings>;

struct PropagateOptions {
  int grid_w = kDefaultGrid;
  int grid_h = kDefaultGrid;
  EmbeddingSource embeddings = BaselineEmbeddingSource{};
  SimilarityOptions similarity{};
  AssembleOptions assemble{};
};

/// Per-image state that does not depend on the edits.
struct PreparedImage {
  GrayImage native;
  GrayImage grid;
  PixelEmbeddings embeddings;
  SimilarityMatrix similarity;
  std::shared_ptr<const Eigen::MatrixXd> smoothness;  ///< (I - S)^T (I - S), shared by every edit set
};

PreparedImage prepare_image(const GrayImage& g, const PropagateOptions& opts);

struct SolveReport {
  double residual = 0.0;
  std::size_t constraints = 0;
  double beta = 0.0;
  Factorization factorization = Factorization::kCholesky;
};

struct PropagateResult {
  ColorFieldLab grid_chroma;    ///< solver grid, native Lab units
  ColorFieldLab native_chroma;  ///< upsampled to the input resolution
  RgbImage image;               ///< native L merged with propagated chroma
  std::size_t clamped_pixels = 0;
  SolveReport report;
};

/// Solves an already assembled system for a prepared image and renders it.
PropagateResult finish_propagation(const PreparedImage& prepared, const GcrfSystem& sys);

/// embeddings -> similarity -> assemble -> solve -> upsample -> merge.
/// Throws SingularSystem for an empty edit set and OutOfBoundsError.
PropagateResult propagate(const PreparedImage& prepared, const EditSet& edits, const PropagateOptions& opts);
PropagateResult propagate(const GrayImage& g, const EditSet& edits, const PropagateOptions& opts = {});

enum class PatchMode {
  kCenterMean,  ///< one constraint per point: the patch-mean color at the center
  kFullPatch,   ///< every pixel of the patch constrained to its own color
};

/// Draws n_points distinct centers uniformly (seeded) and reveals patch x patch
/// neighborhoods of the ground truth (native units, grid resolution), clipped
/// at the border.
EditSet reveal_patches(const ColorFieldLab& ground_truth, int n_points, int patch, std::uint64_t seed,
                       PatchMode mode = PatchMode::kCenterMean, double beta = kTestBeta);

}  // namespace gcrf
