// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/pipeline.hpp"

namespace gcrf {
namespace {

// Start with a narrow posterior so the decoder sees the encoder's signal
// before it learns to ignore z.
constexpr double kInitialLogVar = -6.0;

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ColorFieldLab to_field(int w, int h, const Eigen::VectorXd& xa, const Eigen::VectorXd& xb, double scale) {
  ColorFieldLab f(w, h);
  for (Eigen::Index i = 0; i < xa.size(); ++i) {
    f.a[i] = scale * xa[i];
    f.b[i] = scale * xb[i];
  }
  return f;
}

}  // namespace

std::vector<std::uint8_t> random_mask(int pixels, double fraction, Rng& rng) {
  std::vector<std::uint8_t> mask(pixels, 0);
  int keep = static_cast<int>(std::lround(fraction * pixels));
  keep = std::clamp(keep, 1, pixels);
  if (keep == pixels) {
    std::fill(mask.begin(), mask.end(), 1);
    return mask;
  }
  std::vector<int> order(pixels);
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < keep; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(pixels - i)));
    std::swap(order[i], order[j]);
    mask[order[i]] = 1;
  }
  return mask;
}

Constraints unary_constraints(const GrayImage& g, const Eigen::VectorXd& unary, std::vector<std::uint8_t> mask,
                              double beta) {
  const Eigen::Index p = static_cast<Eigen::Index>(g.size());
  Constraints c(g.width, g.height, beta);
  c.mask = std::move(mask);
  for (Eigen::Index i = 0; i < p; ++i) {
    c.target_a[i] = unary[i];
    c.target_b[i] = unary[p + i];
  }
  return c;
}

ToyVae::ToyVae(const ModelDims& dims) : dims_(dims) {
  if (dims.latent_dim < 1) throw Error(ErrorKind::kBadInput, "latent dimension must be >= 1");
  if (dims.embedding_dim < 1) throw Error(ErrorKind::kBadInput, "embedding dimension must be >= 1");
  if (!(dims.temperature > 0.0)) throw Error(ErrorKind::kBadInput, "temperature must be > 0");
  const int d = dims.latent_dim;
  const int in = 2 * kBasisSize;
  shapes_ = {{d, in}, {d, 1}, {d, in}, {d, 1}, {in, d}, {in, 1}, {dims.embedding_dim, kBaselineFeatureCount}};
  offsets_.push_back(0);
  for (const auto& [r, c] : shapes_) offsets_.push_back(offsets_.back() + static_cast<Eigen::Index>(r) * c);
  theta_ = Eigen::VectorXd::Zero(offsets_.back());
}

ToyVae ToyVae::initialize(const ModelDims& dims, std::uint64_t seed, const BaselineFeatureWeights& structure) {
  ToyVae vae(dims);
  Rng rng(seed);
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(2 * kBasisSize));
  const double scales[] = {in_scale, 0.0, 0.1 * in_scale, 0.0, 1.0 / std::sqrt(static_cast<double>(dims.latent_dim))};
  for (int block : {0, 2, 4}) {
    auto [begin, end] = vae.block_range(block);
    for (Eigen::Index i = begin; i < end; ++i) vae.theta_[i] = scales[block] * rng.normal();
  }
  vae.enc_logvar_b().setConstant(kInitialLogVar);
  const double w[kBaselineFeatureCount] = {structure.intensity, structure.col, structure.row, structure.local_mean,
                                           structure.local_std};
  auto sw = vae.structure_w();
  for (int k = 0; k < std::min(dims.embedding_dim, kBaselineFeatureCount); ++k) sw(k, k) = w[k];
  return vae;
}

std::pair<Eigen::Index, Eigen::Index> ToyVae::block_range(int block) const {
  return {offsets_.at(block), offsets_.at(block + 1)};
}

ToyVae::MatrixMap ToyVae::matrix(int block) {
  return MatrixMap(theta_.data() + offsets_[block], shapes_[block].first, shapes_[block].second);
}
ToyVae::VectorMap ToyVae::vector(int block) {
  return VectorMap(theta_.data() + offsets_[block], shapes_[block].first);
}
ToyVae::ConstMatrixMap ToyVae::matrix(int block) const {
  return ConstMatrixMap(theta_.data() + offsets_[block], shapes_[block].first, shapes_[block].second);
}
ToyVae::ConstVectorMap ToyVae::vector(int block) const {
  return ConstVectorMap(theta_.data() + offsets_[block], shapes_[block].first);
}

Eigen::MatrixXd pixel_basis(const GrayImage& g) {
  Eigen::MatrixXd phi(kBasisSize, static_cast<Eigen::Index>(g.size()));
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const Eigen::Index p = static_cast<Eigen::Index>(r) * g.width + c;
      phi(0, p) = 1.0;
      phi(1, p) = g.at(r, c);
      phi(2, p) = g.width > 1 ? static_cast<double>(c) / (g.width - 1) - 0.5 : 0.0;
      phi(3, p) = g.height > 1 ? static_cast<double>(r) / (g.height - 1) - 0.5 : 0.0;
    }
  }
  return phi;
}

Eigen::VectorXd encoder_features(const Eigen::MatrixXd& basis, const Eigen::VectorXd& xa, const Eigen::VectorXd& xb) {
  const double inv_p = 1.0 / static_cast<double>(basis.cols());
  Eigen::VectorXd e(2 * kBasisSize);
  e.head(kBasisSize) = basis * xa * inv_p;
  e.tail(kBasisSize) = basis * xb * inv_p;
  return e;
}

Posterior encode(const ToyVae& vae, const Eigen::VectorXd& features) {
  return {vae.enc_mean_w() * features + vae.enc_mean_b(), vae.enc_logvar_w() * features + vae.enc_logvar_b()};
}

Eigen::VectorXd decode(const ToyVae& vae, const Eigen::MatrixXd& basis, const Eigen::VectorXd& z) {
  const Eigen::VectorXd h = vae.dec_w() * z + vae.dec_b();
  const Eigen::Index p = basis.cols();
  Eigen::VectorXd out(2 * p);
  out.head(p) = basis.transpose() * h.head(kBasisSize);
  out.tail(p) = basis.transpose() * h.tail(kBasisSize);
  return out;
}

PixelEmbeddings structure_embeddings(const ToyVae& vae, const Eigen::MatrixXd& features) {
  return {vae.structure_w() * features};
}

double gaussian_kl(const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar) {
  if (mean.size() != logvar.size()) throw Error(ErrorKind::kBadInput, "gaussian_kl: size mismatch");
  return 0.5 * (mean.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
}

TrainingExample make_example(const GrayImage& gray, const ColorFieldLab& chroma, int mode) {
  if (gray.width != chroma.width || gray.height != chroma.height) {
    throw Error(ErrorKind::kBadInput, "gray and chroma sizes differ");
  }
  TrainingExample ex;
  ex.gray = gray;
  ex.xa = to_vector(chroma.a) / kChromaScale;
  ex.xb = to_vector(chroma.b) / kChromaScale;
  ex.basis = pixel_basis(gray);
  ex.features = baseline_features(gray);
  ex.mode = mode;
  return ex;
}

StepResult stage1_step(const ToyVae& vae, std::span<const TrainingExample> batch, Phase phase, const StepConfig& cfg,
                       Rng& rng) {
  if (batch.empty()) throw Error(ErrorKind::kBadInput, "empty batch");
  StepResult out;
  out.grad = Eigen::VectorXd::Zero(vae.params().size());
  ToyVae grad_view = vae;  // same layout; its parameters hold the gradient
  grad_view.params().setZero();
  const SimilarityOptions sim_opts{vae.dims().temperature, false};

  for (const TrainingExample& ex : batch) {
    const Eigen::Index p = ex.xa.size();
    const Eigen::VectorXd e = encoder_features(ex.basis, ex.xa, ex.xb);
    const Posterior post = encode(vae, e);
    const Eigen::VectorXd stddev = (0.5 * post.logvar.array()).exp();
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(post.mean.size());
    if (!cfg.use_posterior_mean) {
      for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = rng.normal();
    }
    const Eigen::VectorXd z = post.mean + stddev.cwiseProduct(eps);
    const Eigen::VectorXd unary = decode(vae, ex.basis, z);

    Eigen::VectorXd target(2 * p);
    target << ex.xa, ex.xb;
    const double kl = gaussian_kl(post.mean, post.logvar);

    if (phase == Phase::kUnary) {
      const Eigen::VectorXd residual = unary - target;
      const double recon = residual.squaredNorm() / static_cast<double>(2 * p);
      out.kl += kl;
      out.recon += recon;
      out.loss += cfg.kl_weight * kl + recon;

      const Eigen::VectorXd d_unary = residual / static_cast<double>(p);
      Eigen::VectorXd dh(2 * kBasisSize);
      dh.head(kBasisSize) = ex.basis * d_unary.head(p);
      dh.tail(kBasisSize) = ex.basis * d_unary.tail(p);
      grad_view.dec_w() += dh * z.transpose();
      grad_view.dec_b() += dh;
      const Eigen::VectorXd dz = vae.dec_w().transpose() * dh;
      const Eigen::VectorXd d_mean = dz + cfg.kl_weight * post.mean;
      const Eigen::VectorXd d_logvar =
          (dz.array() * 0.5 * stddev.array() * eps.array() +
           cfg.kl_weight * 0.5 * (post.logvar.array().exp() - 1.0))
              .matrix();
      grad_view.enc_mean_w() += d_mean * e.transpose();
      grad_view.enc_mean_b() += d_mean;
      grad_view.enc_logvar_w() += d_logvar * e.transpose();
      grad_view.enc_logvar_b() += d_logvar;
      continue;
    }

    const PixelEmbeddings emb = structure_embeddings(vae, ex.features);
    const SimilarityMatrix s = build_similarity(emb, sim_opts);
    const Constraints c =
        unary_constraints(ex.gray, unary, random_mask(static_cast<int>(p), cfg.fraction, rng), cfg.beta);
    const GcrfSystem sys = assemble(s, c);
    const Solution sol = solve(sys);
    Eigen::VectorXd pred(2 * p);
    pred << to_vector(sol.field.a), to_vector(sol.field.b);
    const Eigen::VectorXd residual = pred - target;
    const double recon = residual.squaredNorm() / static_cast<double>(2 * p);
    out.kl += kl;
    out.recon += recon;
    out.loss += cfg.kl_weight * kl + recon;

    const Eigen::VectorXd d_pred = residual / static_cast<double>(p);
    const GcrfBackward back = backward(sys, sol, d_pred.head(p), d_pred.tail(p));
    const Eigen::MatrixXd d_emb = grad_embeddings(s, emb, back.d_matrix, sim_opts);
    grad_view.structure_w() += d_emb * ex.features.transpose();
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_n;
  out.kl *= inv_n;
  out.recon *= inv_n;
  out.grad = grad_view.params() * inv_n;
  return out;
}

ColorFieldLab reconstruct(const ToyVae& vae, const TrainingExample& ex, Phase phase, double fraction, double beta,
                          Rng& rng) {
  const Eigen::Index p = ex.xa.size();
  const Posterior post = encode(vae, encoder_features(ex.basis, ex.xa, ex.xb));
  const Eigen::VectorXd unary = decode(vae, ex.basis, post.mean);
  if (phase == Phase::kUnary) {
    return to_field(ex.gray.width, ex.gray.height, unary.head(p), unary.tail(p), kChromaScale);
  }
  const SimilarityMatrix s =
      build_similarity(structure_embeddings(vae, ex.features), {vae.dims().temperature, false});
  const Constraints c = unary_constraints(ex.gray, unary, random_mask(static_cast<int>(p), fraction, rng), beta);
  const Solution sol = solve(assemble(s, c));
  ColorFieldLab out = sol.field;
  for (auto& v : out.a) v *= kChromaScale;
  for (auto& v : out.b) v *= kChromaScale;
  return out;
}

MaskSchedule MaskSchedule::defaults() { return {{{0, 1.0}, {2, 0.75}, {4, 0.5}, {6, 0.25}, {8, 0.10}}}; }

void MaskSchedule::validate() const {
  if (stages.empty()) throw Error(ErrorKind::kBadInput, "mask schedule is empty");
  if (stages.front().first != 0) throw Error(ErrorKind::kBadInput, "mask schedule must start at epoch 0");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto [epoch, fraction] = stages[i];
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw Error(ErrorKind::kBadInput, "mask schedule fractions must lie in (0, 1]");
    }
    if (i > 0 && epoch <= stages[i - 1].first) {
      throw Error(ErrorKind::kBadInput, "mask schedule epochs must strictly increase");
    }
    if (i > 0 && fraction > stages[i - 1].second) {
      throw Error(ErrorKind::kBadInput, "mask schedule fractions must not increase");
    }
  }
}

double MaskSchedule::fraction_at(int epoch) const {
  double f = stages.front().second;
  for (const auto& [start, fraction] : stages) {
    if (epoch >= start) f = fraction;
  }
  return f;
}

}  // namespace gcrf
