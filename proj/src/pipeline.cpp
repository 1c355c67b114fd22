// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/parallel.hpp"
#include "gcrf/pipeline.hpp"

namespace gcrf {
namespace {

void shuffle(std::vector<int>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
}

void validate(const TrainConfig& cfg) {
  if (cfg.components < 1) throw Error(ErrorKind::kBadInput, "components must be >= 1");
  if (!(cfg.sigma > 0.0)) throw Error(ErrorKind::kBadInput, "sigma must be > 0");
  if (cfg.batch_size < 1) throw Error(ErrorKind::kBadInput, "batch_size must be >= 1");
  if (cfg.epochs_unary < 0 || cfg.epochs_hoc < 0 || cfg.stage2.epochs < 0) {
    throw Error(ErrorKind::kBadInput, "epoch counts must be >= 0");
  }
  if (!(cfg.beta > 0.0)) throw Error(ErrorKind::kBadInput, "beta must be > 0");
  if (cfg.latent_samples < 1) throw Error(ErrorKind::kBadInput, "latent_samples must be >= 1");
  cfg.schedule.validate();
}

void run_phase(ToyVae& vae, std::span<const TrainingExample> data, const TrainConfig& cfg, Phase phase, int epochs,
               Rng& rng, const std::function<void(const EpochLog&)>& on_epoch) {
  const double lr = phase == Phase::kUnary ? cfg.lr_unary : cfg.lr_hoc;
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(vae.params().size());
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingExample> batch;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    StepConfig step{cfg.kl_weight, cfg.beta, 1.0, false};
    if (phase == Phase::kHoc) step.fraction = cfg.schedule.fraction_at(epoch);
    shuffle(order, rng);
    double loss = 0.0;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(data[order[i]]);
      }
      const StepResult r = stage1_step(vae, batch, phase, step, rng);
      velocity = cfg.momentum * velocity - lr * r.grad;
      vae.params() += velocity;
      loss += r.loss;
      ++steps;
    }
    if (on_epoch) on_epoch({phase, epoch, step.fraction, loss / std::max(steps, 1)});
  }
}

}  // namespace

TrainedModel train(std::span<const TrainingExample> data, const TrainConfig& cfg,
                   const std::function<void(const EpochLog&)>& on_epoch) {
  validate(cfg);
  if (data.empty()) throw Error(ErrorKind::kBadInput, "no training data");
  TrainedModel model;
  model.vae = ToyVae::initialize(cfg.dims, cfg.seed, cfg.structure);
  Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL);

  run_phase(model.vae, data, cfg, Phase::kUnary, cfg.epochs_unary, rng, on_epoch);
  run_phase(model.vae, data, cfg, Phase::kHoc, cfg.epochs_hoc, rng, on_epoch);

  std::vector<Eigen::VectorXd> latents;
  latents.reserve(data.size() * cfg.latent_samples);
  for (const auto& ex : data) {
    const Posterior post = encode(model.vae, encoder_features(ex.basis, ex.xa, ex.xb));
    const Eigen::VectorXd stddev = (0.5 * post.logvar.array()).exp();
    for (int s = 0; s < cfg.latent_samples; ++s) {
      Eigen::VectorXd z = post.mean;
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] += stddev[j] * rng.normal();
      latents.push_back(std::move(z));
    }
  }
  model.gmm = stage2_fit(init_gmm(latents, cfg.components, cfg.sigma), latents, cfg.stage2);
  return model;
}

SampleResult sample_diverse(const TrainedModel& model, const GrayImage& g, int n, const SampleOptions& opts, Rng& rng) {
  if (n < 1) throw Error(ErrorKind::kBadInput, "sample count must be >= 1");
  model.gmm.validate();
  if (model.gmm.dim() != model.vae.latent_dim()) throw Error(ErrorKind::kBadInput, "mixture/latent size mismatch");
  const int p = static_cast<int>(g.size());
  const Eigen::MatrixXd basis = pixel_basis(g);

  SampleResult out;
  for (int k = 0; k < n; ++k) {
    LatentSample ls;
    if (opts.mode == SampleMode::kPerComponent) {
      ls.component = k % model.gmm.components();
    } else {
      const double u = rng.uniform();
      double acc = 0.0;
      ls.component = model.gmm.components() - 1;
      for (int i = 0; i < model.gmm.components(); ++i) {
        acc += model.gmm.weights[i];
        if (u < acc) {
          ls.component = i;
          break;
        }
      }
    }
    ls.z = model.gmm.means.row(ls.component).transpose();
    for (Eigen::Index j = 0; j < ls.z.size(); ++j) {
      ls.z[j] += opts.noise_scale * model.gmm.sigma * rng.normal();
    }
    out.latents.push_back(std::move(ls));
  }

  const SimilarityMatrix s = build_similarity(structure_embeddings(model.vae, baseline_features(g)),
                                              {model.vae.dims().temperature, false});
  const std::vector<std::uint8_t> mask = random_mask(p, opts.fraction, rng);
  std::vector<Constraints> constraints;
  for (const auto& ls : out.latents) {
    constraints.push_back(unary_constraints(g, decode(model.vae, basis, ls.z), mask, opts.beta));
  }

  const std::uint64_t before = factorization_count();
  const GcrfSystem shared = assemble(s, constraints.front());
  out.factorizations = factorization_count() - before;

  out.samples.resize(n);
  parallel_for(n, [&](int k) {
    const Solution sol = solve(k == 0 ? shared : shared.with_targets(constraints[k]));
    ColorFieldLab field = sol.field;
    for (auto& v : field.a) v *= kChromaScale;
    for (auto& v : field.b) v *= kChromaScale;
    out.samples[k] = std::move(field);
  });
  return out;
}

}  // namespace gcrf
