// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "gcrf/pipeline.hpp"
#include "gcrf/synthetic.hpp"
#include "support.hpp"

namespace gcrf {
namespace {

using testing::kind_of;
using testing::TempDir;

std::vector<TrainingExample> toy_data(int count, int size, std::uint64_t seed) {
  std::vector<TrainingExample> out;
  for (const auto& s : two_mode_dataset(count, size, seed)) out.push_back(make_example(s.gray, s.chroma, s.mode));
  return out;
}

ModelDims small_dims() {
  ModelDims d;
  d.latent_dim = 3;
  return d;
}

TEST(Vae, KlClosedForm) {
  Eigen::VectorXd mu(2), lv(2);
  mu << 0.0, 0.0;
  lv << 0.0, 0.0;
  EXPECT_DOUBLE_EQ(gaussian_kl(mu, lv), 0.0);
  mu << 1.0, -2.0;
  lv << std::log(2.0), 0.0;
  // 1/2 sum(exp(lv) + mu^2 - 1 - lv)
  EXPECT_NEAR(gaussian_kl(mu, lv), 0.5 * ((2.0 + 1.0 - 1.0 - std::log(2.0)) + 4.0), 1e-12);
}

TEST(Vae, InitializationIsSeeded) {
  const ToyVae a = ToyVae::initialize(small_dims(), 7);
  const ToyVae b = ToyVae::initialize(small_dims(), 7);
  const ToyVae c = ToyVae::initialize(small_dims(), 8);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  EXPECT_TRUE((a.enc_logvar_b().array() == -6.0).all());
  // The structure map starts as the diagonal of baseline weights.
  const BaselineFeatureWeights w;
  EXPECT_DOUBLE_EQ(a.structure_w()(0, 0), w.intensity);
  EXPECT_DOUBLE_EQ(a.structure_w()(0, 1), 0.0);
}

TEST(Vae, ShapesAreConsistent) {
  const auto data = toy_data(2, 8, 3);
  const ToyVae vae = ToyVae::initialize(small_dims(), 1);
  EXPECT_EQ(data[0].basis.rows(), kBasisSize);
  EXPECT_EQ(data[0].basis.cols(), 64);
  const Eigen::VectorXd f = encoder_features(data[0].basis, data[0].xa, data[0].xb);
  EXPECT_EQ(f.size(), vae.encoder_inputs());
  const Posterior post = encode(vae, f);
  EXPECT_EQ(post.mean.size(), 3);
  EXPECT_EQ(decode(vae, data[0].basis, post.mean).size(), 128);
  EXPECT_EQ(structure_embeddings(vae, data[0].features).dim(), kBaselineFeatureCount);
}

TEST(Vae, BlocksTileTheParameterVector) {
  const ToyVae vae = ToyVae::initialize(small_dims(), 1);
  Eigen::Index next = 0;
  for (int b = 0; b < ToyVae::kBlocks; ++b) {
    const auto [begin, end] = vae.block_range(b);
    EXPECT_EQ(begin, next);
    EXPECT_GT(end, begin);
    next = end;
  }
  EXPECT_EQ(next, vae.params().size());
}

double step_loss(const ToyVae& vae, std::span<const TrainingExample> data, Phase phase, const StepConfig& sc) {
  Rng rng(1);
  return stage1_step(vae, data, phase, sc, rng).loss;
}

TEST(Vae, StepGradientMatchesFiniteDifferences) {
  const auto data = toy_data(3, 6, 11);
  const ToyVae vae = ToyVae::initialize(small_dims(), 3);
  for (Phase phase : {Phase::kUnary, Phase::kHoc}) {
    StepConfig sc;
    sc.kl_weight = 0.3;
    sc.fraction = 0.5;
    Rng rng(1);
    const StepResult base = stage1_step(vae, data, phase, sc, rng);
    const auto [s_begin, s_end] = vae.block_range(ToyVae::kStructureBlock);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < vae.params().size(); ++i) {
      const bool frozen = phase == Phase::kUnary ? (i >= s_begin && i < s_end) : (i < s_begin || i >= s_end);
      if (frozen) {
        EXPECT_EQ(base.grad[i], 0.0);
        continue;
      }
      ToyVae v = vae;
      v.params()[i] += 1e-6;
      const double up = step_loss(v, data, phase, sc);
      v.params()[i] -= 2e-6;
      const double down = step_loss(v, data, phase, sc);
      const double fd = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(fd - base.grad[i]) / (std::abs(fd) + std::abs(base.grad[i]) + 1e-8));
    }
    EXPECT_LE(worst, 1e-4) << (phase == Phase::kUnary ? "unary" : "hoc");
  }
}

TEST(Vae, RandomMaskKeepsRequestedShare) {
  Rng rng(2);
  const auto m = random_mask(100, 0.1, rng);
  EXPECT_EQ(std::count(m.begin(), m.end(), 1), 10);
  const auto all = random_mask(7, 1.0, rng);
  EXPECT_EQ(std::count(all.begin(), all.end(), 1), 7);
  const auto one = random_mask(7, 0.01, rng);
  EXPECT_EQ(std::count(one.begin(), one.end(), 1), 1);
}

TEST(MaskSchedule, DefaultsAndLookup) {
  const MaskSchedule s = MaskSchedule::defaults();
  s.validate();
  EXPECT_DOUBLE_EQ(s.fraction_at(0), 1.0);
  EXPECT_DOUBLE_EQ(s.fraction_at(1), 1.0);
  EXPECT_DOUBLE_EQ(s.fraction_at(2), 0.75);
  EXPECT_DOUBLE_EQ(s.fraction_at(5), 0.5);
  EXPECT_DOUBLE_EQ(s.fraction_at(7), 0.25);
  EXPECT_DOUBLE_EQ(s.fraction_at(8), 0.10);
  EXPECT_DOUBLE_EQ(s.fraction_at(100), 0.10);
}

TEST(MaskSchedule, Validation) {
  EXPECT_EQ(kind_of([] { MaskSchedule{}.validate(); }), ErrorKind::kBadInput);
  EXPECT_EQ(kind_of([] { MaskSchedule{{{1, 1.0}}}.validate(); }), ErrorKind::kBadInput);
  EXPECT_EQ(kind_of([] { MaskSchedule{{{0, 0.5}, {2, 0.75}}}.validate(); }), ErrorKind::kBadInput);
  EXPECT_EQ(kind_of([] { MaskSchedule{{{0, 1.0}, {0, 0.5}}}.validate(); }), ErrorKind::kBadInput);
  EXPECT_EQ(kind_of([] { MaskSchedule{{{0, 0.0}}}.validate(); }), ErrorKind::kBadInput);
}

// Mixture stage.

std::vector<Eigen::VectorXd> clustered(const Eigen::MatrixXd& centers, int per, double spread, Rng& rng,
                                       std::vector<int>* labels) {
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < centers.rows(); ++k) {
    for (int i = 0; i < per; ++i) {
      Eigen::VectorXd z = centers.row(k).transpose();
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += spread * rng.normal();
      out.push_back(z);
      if (labels) labels->push_back(k);
    }
  }
  return out;
}

TEST(Mdn, LossPicksNearestMean) {
  GmmParams g;
  g.means = Eigen::MatrixXd(2, 1);
  g.means << -1.0, 1.0;
  g.weights = Eigen::Vector2d(0.5, 0.5);
  g.sigma = 0.5;
  const MdnLoss l = mdn_loss(g, Eigen::VectorXd::Constant(1, 0.8));
  EXPECT_EQ(l.component, 1);
  EXPECT_NEAR(l.loss, -std::log(0.5) + 0.04 / 0.5, 1e-12);
  // Ties go to the lowest index.
  EXPECT_EQ(mdn_loss(g, Eigen::VectorXd::Zero(1)).component, 0);
}

TEST(Mdn, MixtureNllOfStandardNormal) {
  GmmParams g;
  g.means = Eigen::MatrixXd::Zero(1, 2);
  g.weights = Eigen::VectorXd::Ones(1);
  g.sigma = 1.0;
  EXPECT_NEAR(mixture_nll(g, Eigen::VectorXd::Zero(2)), std::log(2.0 * M_PI), 1e-12);
}

TEST(Mdn, InitPicksFarthestPoints) {
  std::vector<Eigen::VectorXd> z = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 0.1),
                                    Eigen::VectorXd::Constant(1, 5.0)};
  const GmmParams g = init_gmm(z, 2, 0.1);
  EXPECT_DOUBLE_EQ(g.means(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(g.means(1, 0), 5.0);
  EXPECT_DOUBLE_EQ(g.weights.sum(), 1.0);
}

TEST(Mdn, RecoversSeparatedClusters) {
  for (int k : {2, 3}) {
    Rng rng(100 + k);
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, 4);
    for (int i = 0; i < k; ++i) centers(i, i) = 2.0;
    std::vector<int> labels;
    const auto z = clustered(centers, 1000 / k, 0.1, rng, &labels);
    const GmmParams g = stage2_fit(init_gmm(z, k, 0.1), z, Stage2Config{});
    for (int i = 0; i < k; ++i) {
      double best = 1e9;
      for (int m = 0; m < k; ++m) best = std::min(best, (g.means.row(m) - centers.row(i)).norm());
      EXPECT_LE(best, 0.05) << "k=" << k << " cluster " << i;
    }
    std::map<std::pair<int, int>, int> counts;
    for (std::size_t n = 0; n < z.size(); ++n) ++counts[{mdn_loss(g, z[n]).component, labels[n]}];
    std::map<int, int> majority;
    for (const auto& [key, c] : counts) majority[key.first] = std::max(majority[key.first], c);
    int agree = 0;
    for (const auto& [m, c] : majority) agree += c;
    EXPECT_GE(static_cast<double>(agree) / z.size(), 0.95);
  }
}

TEST(Mdn, SingleComponentReachesSampleMean) {
  Rng rng(9);
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(1, 3);
  centers << 0.3, -0.2, 1.0;
  const auto z = clustered(centers, 500, 0.5, rng, nullptr);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (const auto& v : z) mean += v;
  mean /= static_cast<double>(z.size());
  const GmmParams g = stage2_fit(init_gmm(z, 1, 0.1), z, Stage2Config{});
  EXPECT_LE((g.means.row(0).transpose() - mean).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Mdn, LossDecreases) {
  Rng rng(10);
  Eigen::MatrixXd centers(2, 2);
  centers << 1.0, 0.0, -1.0, 0.0;
  const auto z = clustered(centers, 100, 0.2, rng, nullptr);
  std::vector<double> losses;
  stage2_fit(init_gmm(z, 2, 0.1), z, Stage2Config{}, [&](int, double l) { losses.push_back(l); });
  ASSERT_EQ(losses.size(), 300u);
  EXPECT_LT(losses.back(), losses.front());
}

// Training driver, sampling and checkpoints.

TEST(Train, ZeroEpochsLeavesInitialization) {
  const auto data = toy_data(4, 8, 1);
  TrainConfig cfg;
  cfg.dims = small_dims();
  cfg.epochs_unary = 0;
  cfg.epochs_hoc = 0;
  cfg.stage2.epochs = 0;
  cfg.seed = 21;
  const TrainedModel m = train(data, cfg);
  EXPECT_EQ(m.vae.params(), ToyVae::initialize(cfg.dims, cfg.seed, cfg.structure).params());
  EXPECT_EQ(m.gmm.components(), cfg.components);
}

TEST(Train, IsDeterministic) {
  const auto data = toy_data(4, 8, 1);
  TrainConfig cfg;
  cfg.dims = small_dims();
  cfg.epochs_unary = 2;
  cfg.epochs_hoc = 1;
  cfg.stage2.epochs = 5;
  std::vector<EpochLog> log;
  const TrainedModel a = train(data, cfg, [&](const EpochLog& e) { log.push_back(e); });
  const TrainedModel b = train(data, cfg);
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log[2].phase, Phase::kHoc);
}

TEST(Train, RejectsBadConfig) {
  const auto data = toy_data(2, 8, 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_EQ(kind_of([&] { train(data, cfg); }), ErrorKind::kBadInput);
  EXPECT_EQ(kind_of([&] { train({}, TrainConfig{}); }), ErrorKind::kBadInput);
}

TrainedModel tiny_model() {
  TrainedModel m;
  m.vae = ToyVae::initialize(small_dims(), 5);
  Rng rng(5);
  std::vector<Eigen::VectorXd> z;
  for (int i = 0; i < 8; ++i) {
    Eigen::VectorXd v(3);
    for (int j = 0; j < 3; ++j) v[j] = rng.normal();
    z.push_back(v);
  }
  m.gmm = init_gmm(z, 4, 0.2);
  return m;
}

TEST(Sample, OneFactorizationForAllSamples) {
  const TrainedModel m = tiny_model();
  const GrayImage g = two_mode_dataset(1, 12, 3)[0].gray;
  Rng rng(1);
  const std::uint64_t before = factorization_count();
  const SampleResult r = sample_diverse(m, g, 8, SampleOptions{}, rng);
  EXPECT_EQ(factorization_count() - before, 1u);
  EXPECT_EQ(r.factorizations, 1u);
  ASSERT_EQ(r.samples.size(), 8u);
  for (int k = 0; k < 8; ++k) EXPECT_EQ(r.latents[k].component, k % 4);
}

TEST(Sample, ZeroNoiseGivesComponentMeans) {
  const TrainedModel m = tiny_model();
  const GrayImage g = two_mode_dataset(1, 10, 3)[0].gray;
  SampleOptions opts;
  opts.noise_scale = 0.0;
  Rng rng(1);
  const SampleResult r = sample_diverse(m, g, 4, opts, rng);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(r.latents[k].z, m.gmm.means.row(k).transpose());
}

TEST(Checkpoint, RoundTrip) {
  const TrainedModel m = tiny_model();
  const auto bytes = encode_checkpoint(m);
  const TrainedModel back = decode_checkpoint(bytes);
  EXPECT_EQ(back.vae.params(), m.vae.params());
  EXPECT_EQ(back.gmm.means, m.gmm.means);
  EXPECT_EQ(back.gmm.weights, m.gmm.weights);
  EXPECT_EQ(back.gmm.sigma, m.gmm.sigma);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  TempDir dir;
  save_checkpoint(dir / "m.bin", m);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir / "m.bin")), bytes);
}

TEST(Checkpoint, CorruptionIsRejected) {
  auto bytes = encode_checkpoint(tiny_model());
  auto truncated = bytes;
  truncated.resize(truncated.size() - 9);
  EXPECT_EQ(kind_of([&] { decode_checkpoint(truncated); }), ErrorKind::kBadInput);
  bytes[0] ^= 0xff;
  EXPECT_EQ(kind_of([&] { decode_checkpoint(bytes); }), ErrorKind::kBadInput);
}

}  // namespace
}  // namespace gcrf
