// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "gcrf/similarity.hpp"
#include "gcrf/synthetic.hpp"
#include "support.hpp"

namespace gcrf {
namespace {

using testing::kind_of;
using testing::random_embeddings;
using testing::TempDir;

TEST(Similarity, ZeroGramIsUniform) {
  const SimilarityMatrix s = softmax_rows(Eigen::MatrixXd::Zero(4, 4), 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(s.rows(i, j), 0.25);
  }
}

TEST(Similarity, LogThreeRow) {
  Eigen::MatrixXd gram(2, 2);
  gram << std::log(3.0), 0.0, 0.0, 0.0;
  const SimilarityMatrix s = softmax_rows(gram, 1.0);
  EXPECT_NEAR(s.rows(0, 0), 0.75, 1e-12);
  EXPECT_NEAR(s.rows(0, 1), 0.25, 1e-12);
}

TEST(Similarity, OneDimensionalPair) {
  PixelEmbeddings e;
  e.values = Eigen::MatrixXd(1, 2);
  e.values << 1.0, -1.0;
  const SimilarityMatrix s = build_similarity(e);
  // e / (e + 1/e)
  const double expected = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(s.rows(0, 0), expected, 1e-12);
  EXPECT_NEAR(s.rows(0, 1), 1.0 - expected, 1e-12);
  EXPECT_NEAR(s.rows(0, 0), 0.881, 1e-3);
}

TEST(Similarity, OrthogonalClustersStayApart) {
  PixelEmbeddings e;
  e.values = Eigen::MatrixXd::Zero(2, 8);
  for (int p = 0; p < 4; ++p) e.values(0, p) = 3.0;
  for (int p = 4; p < 8; ++p) e.values(1, p) = 3.0;
  const SimilarityMatrix s = build_similarity(e);
  for (int p = 0; p < 8; ++p) {
    const int begin = p < 4 ? 0 : 4;
    EXPECT_GE(s.rows.row(p).segment(begin, 4).sum(), 0.99);
  }
}

TEST(Similarity, TwoIntensityImageConcentratesMass) {
  const SyntheticImage img = two_region_image(4, 4, 0.2, 0.8);
  const SimilarityMatrix s = build_similarity(baseline_embeddings(img.gray, 5));
  for (int p = 0; p < 16; ++p) {
    double same = 0.0;
    for (int q = 0; q < 16; ++q) {
      if (img.region[q] == img.region[p]) same += s.rows(p, q);
    }
    EXPECT_GE(same, 0.95) << "pixel " << p;
  }
}

TEST(Similarity, ConstantImageIsUniform) {
  const GrayImage g(6, 5, 0.4);
  const Eigen::MatrixXd f = baseline_features(g);
  EXPECT_DOUBLE_EQ(f.row(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(f.row(3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_DOUBLE_EQ(f.row(4).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Similarity, BaselineEmbeddingsPadAndTruncate) {
  const SyntheticImage img = two_region_image(6, 4, 0.1, 0.9);
  EXPECT_EQ(baseline_embeddings(img.gray, 3).dim(), 3);
  const PixelEmbeddings padded = baseline_embeddings(img.gray, 8);
  EXPECT_EQ(padded.dim(), 8);
  EXPECT_DOUBLE_EQ(padded.values.bottomRows(3).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(kind_of([&] { baseline_embeddings(img.gray, 2); }), ErrorKind::kBadInput);
}

// Properties over random embeddings.

TEST(SimilarityProperty, RowsAreStochastic) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(8));
    const int p = 2 + static_cast<int>(rng.below(30));
    SimilarityOptions opts;
    opts.temperature = 0.1 + 2.0 * rng.uniform();
    opts.normalize_columns = trial % 2 == 1;
    const SimilarityMatrix s = build_similarity(random_embeddings(d, p, rng, 3.0), opts);
    EXPECT_GE(s.rows.minCoeff(), 0.0);
    for (int i = 0; i < p; ++i) EXPECT_NEAR(s.rows.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(SimilarityProperty, SoftmaxIsShiftInvariantPerRow) {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int p = 2 + static_cast<int>(rng.below(20));
    Eigen::MatrixXd gram(p, p);
    for (Eigen::Index i = 0; i < gram.size(); ++i) gram.data()[i] = 4.0 * rng.normal();
    Eigen::MatrixXd shifted = gram;
    for (int i = 0; i < p; ++i) shifted.row(i).array() += 100.0 * rng.normal();
    const double t = 0.2 + rng.uniform();
    EXPECT_LE((softmax_rows(gram, t).rows - softmax_rows(shifted, t).rows).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SimilarityProperty, LargeLogitsStayFinite) {
  Eigen::MatrixXd gram(2, 2);
  gram << 1e4, -1e4, -1e4, 1e4;
  const SimilarityMatrix s = softmax_rows(gram, 1e-3);
  EXPECT_TRUE(s.rows.allFinite());
  EXPECT_DOUBLE_EQ(s.rows(0, 0), 1.0);
}

TEST(SimilarityProperty, NormalizedColumnsIgnoreScale) {
  Rng rng(5);
  const PixelEmbeddings e = random_embeddings(4, 12, rng);
  PixelEmbeddings scaled = e;
  for (int p = 0; p < 12; ++p) scaled.values.col(p) *= 0.5 + 3.0 * rng.uniform();
  SimilarityOptions opts;
  opts.normalize_columns = true;
  EXPECT_LE((build_similarity(e, opts).rows - build_similarity(scaled, opts).rows).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Similarity, EmbeddingFileRoundTrip) {
  Rng rng(9);
  const PixelEmbeddings e = random_embeddings(3, 10, rng);
  EXPECT_EQ(decode_embeddings(encode_embeddings(e)).values, e.values);
  TempDir dir;
  save_embeddings(dir / "e.bin", e);
  EXPECT_EQ(load_embeddings(dir / "e.bin").values, e.values);

  auto bytes = encode_embeddings(e);
  bytes[0] = 'X';
  EXPECT_EQ(kind_of([&] { decode_embeddings(bytes); }), ErrorKind::kBadInput);
  bytes = encode_embeddings(e);
  bytes.pop_back();
  EXPECT_EQ(kind_of([&] { decode_embeddings(bytes); }), ErrorKind::kBadInput);
}

}  // namespace
}  // namespace gcrf
