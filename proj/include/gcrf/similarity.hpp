// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gcrf/image.hpp"

namespace gcrf {

/// D x P embedding matrix; column j is the embedding of pixel j.
struct PixelEmbeddings {
  Eigen::MatrixXd values;

  int dim() const { return static_cast<int>(values.rows()); }
  int pixels() const { return static_cast<int>(values.cols()); }
};

/// Row-stochastic P x P similarity. Not symmetric in general.
struct SimilarityMatrix {
  Eigen::MatrixXd rows;

  int pixels() const { return static_cast<int>(rows.rows()); }
};

struct SimilarityOptions {
  double temperature = 1.0;
  bool normalize_columns = false;  ///< unit-normalize embedding columns before the Gram product
};

/// Row-wise softmax of gram / temperature with max subtraction.
SimilarityMatrix softmax_rows(const Eigen::MatrixXd& gram, double temperature);

Eigen::MatrixXd gram_matrix(const PixelEmbeddings& emb, bool normalize_columns);

SimilarityMatrix build_similarity(const PixelEmbeddings& emb, const SimilarityOptions& opts = {});

/// Weights of the hand-crafted per-pixel features, in feature order.
struct BaselineFeatureWeights {
  double intensity = 4.0;
  double col = 1.0;
  double row = 1.0;
  double local_mean = 1.0;
  double local_std = 1.0;
};

inline constexpr int kBaselineFeatureCount = 5;

/// Standardized, unweighted features (intensity, col/width, row/height,
/// 3x3 mean, 3x3 std) as a 5 x P matrix. Channels with zero spread are zero.
Eigen::MatrixXd baseline_features(const GrayImage& g);

/// Weighted baseline features truncated or zero-padded to D rows. Requires D >= 3.
PixelEmbeddings baseline_embeddings(const GrayImage& g, int dim,
                                    const BaselineFeatureWeights& weights = {});

// "GCRFEMB1" files: magic, D and P as u32 LE, then D*P f64 LE pixel-major.
std::vector<std::uint8_t> encode_embeddings(const PixelEmbeddings& emb);
PixelEmbeddings decode_embeddings(std::span<const std::uint8_t> bytes);
void save_embeddings(const std::filesystem::path& path, const PixelEmbeddings& emb);
PixelEmbeddings load_embeddings(const std::filesystem::path& path);

}  // namespace gcrf
