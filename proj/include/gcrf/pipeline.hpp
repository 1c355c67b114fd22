// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale two-stage colorization model around the G-CRF layer.
//
// The encoder and decoder are affine maps over per-pixel basis features
// phi(p) = (1, g_p, x_p, y_p), with x_p and y_p centered coordinates:
//   encoder  e_{c,k} = mean_p phi_k(p) x_c(p),  mu = W_mu e + b_mu,
//            logvar = W_lv e + b_lv
//   decoder  h = W_dec z + b_dec,  B_c(p) = sum_k phi_k(p) h_{c,k}
// The structure encoder is a linear map of the baseline pixel features,
// embeddings = W_s * features(g). All chroma here is in solver units.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcrf/image.hpp"
#include "gcrf/random.hpp"
#include "gcrf/similarity.hpp"
#include "gcrf/system.hpp"

namespace gcrf {

inline constexpr int kBasisSize = 4;

struct ModelDims {
  int latent_dim = 64;
  int embedding_dim = kBaselineFeatureCount;
  double temperature = 1.0;
};

class ToyVae {
 public:
  using MatrixMap = Eigen::Map<Eigen::MatrixXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstMatrixMap = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  ToyVae() = default;
  explicit ToyVae(const ModelDims& dims);

  /// Seeded Gaussian weights scaled by 1/sqrt(fan-in), a narrow initial
  /// posterior (log-variance bias -6), and a diagonal structure map carrying
  /// the baseline feature weights.
  static ToyVae initialize(const ModelDims& dims, std::uint64_t seed,
                           const BaselineFeatureWeights& structure = {});

  const ModelDims& dims() const { return dims_; }
  int latent_dim() const { return dims_.latent_dim; }
  int encoder_inputs() const { return 2 * kBasisSize; }

  /// All parameters in one vector; the maps below are views into it.
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  MatrixMap enc_mean_w() { return matrix(0); }
  VectorMap enc_mean_b() { return vector(1); }
  MatrixMap enc_logvar_w() { return matrix(2); }
  VectorMap enc_logvar_b() { return vector(3); }
  MatrixMap dec_w() { return matrix(4); }
  VectorMap dec_b() { return vector(5); }
  MatrixMap structure_w() { return matrix(6); }
  ConstMatrixMap enc_mean_w() const { return matrix(0); }
  ConstVectorMap enc_mean_b() const { return vector(1); }
  ConstMatrixMap enc_logvar_w() const { return matrix(2); }
  ConstVectorMap enc_logvar_b() const { return vector(3); }
  ConstMatrixMap dec_w() const { return matrix(4); }
  ConstVectorMap dec_b() const { return vector(5); }
  ConstMatrixMap structure_w() const { return matrix(6); }

  /// Index range [begin, end) of block i within params().
  std::pair<Eigen::Index, Eigen::Index> block_range(int block) const;
  static constexpr int kBlocks = 7;
  static constexpr int kStructureBlock = 6;

 private:
  MatrixMap matrix(int block);
  VectorMap vector(int block);
  ConstMatrixMap matrix(int block) const;
  ConstVectorMap vector(int block) const;

  ModelDims dims_;
  Eigen::VectorXd theta_;
  std::vector<Eigen::Index> offsets_;
  std::vector<std::pair<int, int>> shapes_;
};

/// Basis features phi as a K x P matrix.
Eigen::MatrixXd pixel_basis(const GrayImage& g);

/// Pooled encoder input e (2K) for a chroma field in solver units.
Eigen::VectorXd encoder_features(const Eigen::MatrixXd& basis, const Eigen::VectorXd& xa, const Eigen::VectorXd& xb);

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::VectorXd logvar;
};

Posterior encode(const ToyVae& vae, const Eigen::VectorXd& features);

/// Decoded unaries (a then b, 2P) for latent z.
Eigen::VectorXd decode(const ToyVae& vae, const Eigen::MatrixXd& basis, const Eigen::VectorXd& z);

/// Structure-encoder embeddings W_s * baseline_features(g).
PixelEmbeddings structure_embeddings(const ToyVae& vae, const Eigen::MatrixXd& features);

/// KL(N(mu, diag exp(logvar)) || N(0, I)).
double gaussian_kl(const Eigen::VectorXd& mean, const Eigen::VectorXd& logvar);

/// One training image with the pieces that do not change across steps.
struct TrainingExample {
  GrayImage gray;
  Eigen::VectorXd xa;  ///< ground-truth chroma, solver units
  Eigen::VectorXd xb;
  Eigen::MatrixXd basis;
  Eigen::MatrixXd features;  ///< baseline features (5 x P)
  int mode = -1;             ///< generating palette, when known
};

/// Builds a training example from native-unit chroma.
TrainingExample make_example(const GrayImage& gray, const ColorFieldLab& chroma, int mode = -1);

enum class Phase { kUnary, kHoc };

/// Random subset of max(1, round(fraction * P)) pixels; all of them at fraction 1.
std::vector<std::uint8_t> random_mask(int pixels, double fraction, Rng& rng);

/// Constraints with the decoded unaries (a then b, 2P) as targets.
Constraints unary_constraints(const GrayImage& g, const Eigen::VectorXd& unary, std::vector<std::uint8_t> mask,
                              double beta);

struct StepConfig {
  double kl_weight = 1.0;
  double beta = 1.0;   ///< G-CRF beta during training
  double fraction = 1.0;  ///< share of pixels whose unaries stay visible (Hoc)
  bool use_posterior_mean = false;  ///< z = mu instead of a reparameterized draw
};

struct StepResult {
  double loss = 0.0;
  double kl = 0.0;
  double recon = 0.0;
  Eigen::VectorXd grad;  ///< same layout as ToyVae::params(); frozen blocks are zero
};

/// Loss kl_weight * KL + MSE and its gradient, averaged over the batch. In
/// the Unary phase the reconstruction is the decoded unary field and only
/// the structure map is frozen; in the Hoc phase the unaries are masked to
/// `fraction` of the pixels (at least one), propagated by the G-CRF, and
/// only the structure map is trained. One latent draw per image.
StepResult stage1_step(const ToyVae& vae, std::span<const TrainingExample> batch, Phase phase,
                       const StepConfig& cfg, Rng& rng);

/// Reconstruction of one image from its posterior mean. fraction >= 1 with
/// Phase::kUnary returns the raw decoded unaries.
ColorFieldLab reconstruct(const ToyVae& vae, const TrainingExample& ex, Phase phase, double fraction, double beta,
                          Rng& rng);

struct MaskSchedule {
  std::vector<std::pair<int, double>> stages;  ///< (first epoch, kept fraction)

  static MaskSchedule defaults();
  /// Throws kBadInput unless fractions lie in (0,1] and do not increase,
  /// epochs strictly increase, and the first stage starts at epoch 0.
  void validate() const;
  double fraction_at(int epoch) const;
};

// ---------------------------------------------------------------------------
// Stage 2: mixture over latents.

struct GmmParams {
  Eigen::MatrixXd means;    ///< M x d
  Eigen::VectorXd weights;  ///< simplex
  double sigma = 0.1;

  int components() const { return static_cast<int>(means.rows()); }
  int dim() const { return static_cast<int>(means.cols()); }
  void validate() const;
};

struct MdnLoss {
  double loss = 0.0;
  int component = 0;
};

/// -ln pi_m + |z - mu_m|^2 / (2 sigma^2) for the nearest mean m (ties -> lowest index).
MdnLoss mdn_loss(const GmmParams& gmm, const Eigen::VectorXd& z);

/// Exact mixture negative log-likelihood, normalization constants included.
double mixture_nll(const GmmParams& gmm, const Eigen::VectorXd& z);

/// Farthest-point seeding: first latent, then repeatedly the latent farthest
/// from the chosen means. Uniform weights.
GmmParams init_gmm(std::span<const Eigen::VectorXd> latents, int components, double sigma);

struct Stage2Config {
  int epochs = 300;
  double lr_means = 0.005;
  double lr_weights = 0.5;
  double momentum = 0.9;
};

/// Full-batch gradient descent on the mean mdn_loss; weights are a softmax
/// of free logits. on_epoch (if set) receives the loss before each update.
GmmParams stage2_fit(const GmmParams& init, std::span<const Eigen::VectorXd> latents, const Stage2Config& cfg,
                     const std::function<void(int, double)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Training driver and sampling.

struct TrainConfig {
  ModelDims dims{};
  BaselineFeatureWeights structure{};
  int components = 8;
  double sigma = 0.1;
  double kl_weight = 1e-3;
  double beta = 1.0;
  int batch_size = 8;
  int epochs_unary = 15;
  int epochs_hoc = 15;
  double lr_unary = 0.3;
  double lr_hoc = 0.01;
  double momentum = 0.9;
  MaskSchedule schedule = MaskSchedule::defaults();
  int latent_samples = 4;  ///< posterior draws per image fed to stage 2
  Stage2Config stage2{};
  std::uint64_t seed = 1;
};

struct TrainedModel {
  ToyVae vae;
  GmmParams gmm;
};

struct EpochLog {
  Phase phase;
  int epoch;
  double fraction;
  double loss;
};

TrainedModel train(std::span<const TrainingExample> data, const TrainConfig& cfg,
                   const std::function<void(const EpochLog&)>& on_epoch = {});

enum class SampleMode { kPerComponent, kWeighted };

struct LatentSample {
  Eigen::VectorXd z;
  int component = -1;  ///< source mixture component
};

struct SampleOptions {
  SampleMode mode = SampleMode::kPerComponent;
  double noise_scale = 1.0;  ///< multiplies sigma; 0 gives the component means
  double beta = 5.0;
  double fraction = 1.0;     ///< share of decoded unaries kept as constraints
};

struct SampleResult {
  std::vector<ColorFieldLab> samples;  ///< native Lab units, image resolution
  std::vector<LatentSample> latents;
  std::uint64_t factorizations = 0;
};

/// Draws N latents, decodes each to unaries, and solves all of them against a
/// single factorized G-CRF system.
SampleResult sample_diverse(const TrainedModel& model, const GrayImage& g, int n, const SampleOptions& opts,
                            Rng& rng);

// "GCRFMDL1" checkpoint.
std::vector<std::uint8_t> encode_checkpoint(const TrainedModel& model);
TrainedModel decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace gcrf
