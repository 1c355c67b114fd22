// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "gcrf/gradcheck.hpp"
#include "gcrf/system.hpp"
#include "support.hpp"

namespace gcrf {
namespace {

using testing::kind_of;
using testing::random_embeddings;

GradcheckConfig small_config() {
  GradcheckConfig cfg;
  cfg.instances = 12;
  cfg.max_pixels = 12;
  return cfg;
}

TEST(Gradients, SmallGradcheckPasses) {
  const GradcheckReport r = run_gradcheck(small_config());
  ASSERT_EQ(r.paths.size(), 5u);
  for (const auto& p : r.paths) {
    EXPECT_TRUE(p.pass) << p.name << " " << p.max_error;
    EXPECT_GT(p.checks, 0);
  }
  EXPECT_TRUE(r.pass());
}

TEST(Gradients, SignFlipIsCaught) {
  set_hoc_sign_flip_for_testing(true);
  const GradcheckReport r = run_gradcheck(small_config());
  set_hoc_sign_flip_for_testing(false);
  EXPECT_FALSE(r.pass());
  for (const auto& p : r.paths) {
    if (p.name == "hoc" || p.name == "similarity" || p.name == "embeddings") {
      EXPECT_FALSE(p.pass) << p.name;
    } else {
      EXPECT_TRUE(p.pass) << p.name;
    }
  }
}

TEST(Gradients, GradcheckIsDeterministic) {
  const std::string a = format_gradcheck(run_gradcheck(small_config()));
  const std::string b = format_gradcheck(run_gradcheck(small_config()));
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("tolerance 1.0e-05: pass"), std::string::npos);
}

TEST(Gradients, ConfigIsValidated) {
  GradcheckConfig cfg;
  cfg.instances = 0;
  EXPECT_EQ(kind_of([&] { run_gradcheck(cfg); }), ErrorKind::kBadInput);
  cfg = {};
  cfg.max_pixels = cfg.min_pixels - 1;
  EXPECT_EQ(kind_of([&] { run_gradcheck(cfg); }), ErrorKind::kBadInput);
}

TEST(Gradients, HocGradientIsOuterProduct) {
  Eigen::VectorXd g(3), x(3);
  g << 1.0, -2.0, 0.5;
  x << 0.3, 0.1, -1.0;
  const Eigen::MatrixXd d = grad_hoc_from_unary(g, x);
  const Eigen::MatrixXd expected = -0.5 * (g * x.transpose() + x * g.transpose());
  EXPECT_LE((d - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradients, UnaryGradientSolvesAgainstA) {
  Rng rng(3);
  PixelEmbeddings e = random_embeddings(2, 8, rng);
  Constraints c(8, 1, 2.0);
  c.mask[0] = c.mask[5] = 1;
  const GcrfSystem sys = GcrfSystem::assemble(build_similarity(e), c);
  Eigen::VectorXd dl(8);
  for (int i = 0; i < 8; ++i) dl[i] = rng.normal();
  const Eigen::VectorXd g = grad_unary(sys, dl);
  EXPECT_LE((sys.matrix() * g - dl).norm() / dl.norm(), 1e-10);
}

TEST(GradientsProperty, SimilarityGradientOfZeroIsZero) {
  Rng rng(5);
  const SimilarityMatrix s = build_similarity(random_embeddings(3, 9, rng));
  EXPECT_EQ(grad_similarity(s, Eigen::MatrixXd::Zero(9, 9)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(GradientsProperty, GramGradientRowsSumToZero) {
  // Softmax rows are invariant to per-row shifts, so dL/dgram rows sum to 0.
  Rng rng(6);
  const SimilarityMatrix s = build_similarity(random_embeddings(3, 10, rng));
  Eigen::MatrixXd ds(10, 10);
  for (Eigen::Index i = 0; i < ds.size(); ++i) ds.data()[i] = rng.normal();
  const Eigen::MatrixXd dg = grad_gram(s, ds, 0.7);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(dg.row(i).sum(), 0.0, 1e-12);
}

}  // namespace
}  // namespace gcrf
