// SPDX-License-Identifier: Apache-2.0
#include "gcrf/similarity.hpp"

#include <algorithm>
#include <cmath>

#include "gcrf/binary_io.hpp"
#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/parallel.hpp"

namespace gcrf {

SimilarityMatrix softmax_rows(const Eigen::MatrixXd& gram, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorKind::kBadInput, "softmax temperature must be positive");
  }
  if (gram.rows() != gram.cols() || gram.rows() == 0) {
    throw Error(ErrorKind::kBadInput, "gram matrix must be square and non-empty");
  }
  if (!gram.allFinite()) throw Error(ErrorKind::kBadInput, "gram matrix has non-finite entries");

  const Eigen::Index n = gram.rows();
  SimilarityMatrix s{Eigen::MatrixXd(n, n)};
  // Row-major work on a column-major matrix: softmax the columns of the
  // transpose, then transpose back.
  Eigen::MatrixXd cols = gram.transpose() / temperature;
  parallel_for(static_cast<int>(n), [&](int i) {
    auto col = cols.col(i);
    const double peak = col.maxCoeff();
    col = (col.array() - peak).exp();
    col /= col.sum();
  });
  s.rows = cols.transpose();
  return s;
}

Eigen::MatrixXd gram_matrix(const PixelEmbeddings& emb, bool normalize_columns) {
  if (!normalize_columns) return emb.values.transpose() * emb.values;
  Eigen::MatrixXd unit = emb.values;
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    const double n = unit.col(j).norm();
    if (n > 0.0) unit.col(j) /= n;
  }
  return unit.transpose() * unit;
}

SimilarityMatrix build_similarity(const PixelEmbeddings& emb, const SimilarityOptions& opts) {
  if (emb.dim() < 1 || emb.pixels() < 1) throw Error(ErrorKind::kBadInput, "empty embeddings");
  if (!emb.values.allFinite()) throw Error(ErrorKind::kBadInput, "embeddings have non-finite entries");
  return softmax_rows(gram_matrix(emb, opts.normalize_columns), opts.temperature);
}

Eigen::MatrixXd baseline_features(const GrayImage& g) {
  const int w = g.width;
  const int h = g.height;
  const Eigen::Index p = static_cast<Eigen::Index>(g.size());
  Eigen::MatrixXd f(kBaselineFeatureCount, p);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double sum = 0.0;
      int n = 0;
      for (int rr = std::max(0, r - 1); rr <= std::min(h - 1, r + 1); ++rr) {
        for (int cc = std::max(0, c - 1); cc <= std::min(w - 1, c + 1); ++cc) {
          sum += g.at(rr, cc);
          ++n;
        }
      }
      const double mean = sum / n;
      // Two passes: E[x^2] - E[x]^2 leaves roundoff on flat patches.
      double var = 0.0;
      for (int rr = std::max(0, r - 1); rr <= std::min(h - 1, r + 1); ++rr) {
        for (int cc = std::max(0, c - 1); cc <= std::min(w - 1, c + 1); ++cc) {
          const double d = g.at(rr, cc) - mean;
          var += d * d;
        }
      }
      const Eigen::Index j = static_cast<Eigen::Index>(r) * w + c;
      f(0, j) = g.at(r, c);
      f(1, j) = static_cast<double>(c) / w;
      f(2, j) = static_cast<double>(r) / h;
      f(3, j) = mean;
      f(4, j) = std::sqrt(var / n);
    }
  }
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    auto row = f.row(k);
    const double mean = row.mean();
    row.array() -= mean;
    const double sd = std::sqrt(row.squaredNorm() / static_cast<double>(p));
    // Features live on [0,1]; a spread this small is summation noise.
    if (sd < 1e-9) {
      row.setZero();
    } else {
      row /= sd;
    }
  }
  return f;
}

PixelEmbeddings baseline_embeddings(const GrayImage& g, int dim, const BaselineFeatureWeights& weights) {
  if (dim < 3) throw Error(ErrorKind::kBadInput, "baseline embeddings need D >= 3");
  if (g.size() == 0) throw Error(ErrorKind::kBadInput, "empty image");
  const Eigen::MatrixXd f = baseline_features(g);
  const double w[kBaselineFeatureCount] = {weights.intensity, weights.col, weights.row, weights.local_mean,
                                           weights.local_std};
  PixelEmbeddings emb{Eigen::MatrixXd::Zero(dim, f.cols())};
  for (int k = 0; k < std::min(dim, kBaselineFeatureCount); ++k) emb.values.row(k) = w[k] * f.row(k);
  return emb;
}

std::vector<std::uint8_t> encode_embeddings(const PixelEmbeddings& emb) {
  ByteWriter out;
  out.magic("GCRFEMB1");
  out.u32(static_cast<std::uint32_t>(emb.dim()));
  out.u32(static_cast<std::uint32_t>(emb.pixels()));
  // Column-major storage is already pixel-major.
  out.f64s(std::span(emb.values.data(), static_cast<std::size_t>(emb.values.size())));
  return out.take();
}

PixelEmbeddings decode_embeddings(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic("GCRFEMB1");
  const std::uint32_t d = in.u32();
  const std::uint32_t p = in.u32();
  if (d == 0 || p == 0) throw Error(ErrorKind::kBadInput, "embedding file has zero dimension");
  if (in.remaining() != static_cast<std::size_t>(d) * p * 8) {
    throw Error(ErrorKind::kBadInput, "embedding file size does not match header");
  }
  PixelEmbeddings emb{Eigen::MatrixXd(d, p)};
  in.f64s(std::span(emb.values.data(), static_cast<std::size_t>(emb.values.size())));
  if (!emb.values.allFinite()) throw Error(ErrorKind::kBadInput, "embedding file has non-finite values");
  return emb;
}

void save_embeddings(const std::filesystem::path& path, const PixelEmbeddings& emb) {
  write_file_bytes(path, encode_embeddings(emb));
}

PixelEmbeddings load_embeddings(const std::filesystem::path& path) {
  return decode_embeddings(read_file_bytes(path));
}

}  // namespace gcrf
