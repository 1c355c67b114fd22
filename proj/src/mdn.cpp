// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <numbers>

#include "gcrf/error.hpp"
#include "gcrf/pipeline.hpp"

namespace gcrf {
namespace {

int nearest(const Eigen::MatrixXd& means, const Eigen::VectorXd& z, double* dist_sq = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    const double d = (means.row(i).transpose() - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  if (dist_sq) *dist_sq = best_d;
  return best;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
  return w / w.sum();
}

}  // namespace

void GmmParams::validate() const {
  if (means.rows() < 1 || means.cols() < 1) throw Error(ErrorKind::kBadInput, "mixture needs >= 1 component");
  if (weights.size() != means.rows()) throw Error(ErrorKind::kBadInput, "mixture weight count mismatch");
  if (!(sigma > 0.0)) throw Error(ErrorKind::kBadInput, "mixture sigma must be > 0");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw Error(ErrorKind::kBadInput, "mixture weights must lie on the simplex");
  }
}

MdnLoss mdn_loss(const GmmParams& gmm, const Eigen::VectorXd& z) {
  if (z.size() != gmm.dim()) throw Error(ErrorKind::kBadInput, "mdn_loss: latent size mismatch");
  double dist_sq = 0.0;
  const int m = nearest(gmm.means, z, &dist_sq);
  return {-std::log(gmm.weights[m]) + dist_sq / (2.0 * gmm.sigma * gmm.sigma), m};
}

double mixture_nll(const GmmParams& gmm, const Eigen::VectorXd& z) {
  const double var = gmm.sigma * gmm.sigma;
  const double log_norm = -0.5 * gmm.dim() * std::log(2.0 * std::numbers::pi * var);
  Eigen::VectorXd terms(gmm.components());
  for (int i = 0; i < gmm.components(); ++i) {
    terms[i] = std::log(gmm.weights[i]) + log_norm - (gmm.means.row(i).transpose() - z).squaredNorm() / (2.0 * var);
  }
  const double peak = terms.maxCoeff();
  return -(peak + std::log((terms.array() - peak).exp().sum()));
}

GmmParams init_gmm(std::span<const Eigen::VectorXd> latents, int components, double sigma) {
  if (latents.empty()) throw Error(ErrorKind::kBadInput, "init_gmm: no latents");
  if (components < 1) throw Error(ErrorKind::kBadInput, "init_gmm: need >= 1 component");
  const Eigen::Index d = latents.front().size();
  GmmParams gmm;
  gmm.sigma = sigma;
  gmm.means = Eigen::MatrixXd::Zero(components, d);
  gmm.weights = Eigen::VectorXd::Constant(components, 1.0 / components);
  std::vector<double> closest(latents.size(), std::numeric_limits<double>::infinity());
  std::size_t pick = 0;
  for (int m = 0; m < components; ++m) {
    const Eigen::VectorXd& chosen = latents[pick];
    gmm.means.row(m) = chosen.transpose();
    double far = -1.0;
    for (std::size_t n = 0; n < latents.size(); ++n) {
      closest[n] = std::min(closest[n], (latents[n] - chosen).squaredNorm());
      if (closest[n] > far) {
        far = closest[n];
        pick = n;
      }
    }
  }
  return gmm;
}

GmmParams stage2_fit(const GmmParams& init, std::span<const Eigen::VectorXd> latents, const Stage2Config& cfg,
                     const std::function<void(int, double)>& on_epoch) {
  init.validate();
  if (latents.empty()) throw Error(ErrorKind::kBadInput, "stage2_fit: no latents");
  GmmParams gmm = init;
  const int k = gmm.components();
  const double var = gmm.sigma * gmm.sigma;
  const double inv_n = 1.0 / static_cast<double>(latents.size());
  Eigen::VectorXd logits = gmm.weights.array().max(1e-300).log().matrix();
  Eigen::MatrixXd mean_velocity = Eigen::MatrixXd::Zero(k, gmm.dim());
  Eigen::VectorXd logit_velocity = Eigen::VectorXd::Zero(k);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    gmm.weights = softmax(logits);
    Eigen::MatrixXd d_means = Eigen::MatrixXd::Zero(k, gmm.dim());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    double loss = 0.0;
    for (const auto& z : latents) {
      const MdnLoss l = mdn_loss(gmm, z);
      loss += l.loss;
      counts[l.component] += 1.0;
      d_means.row(l.component) += (gmm.means.row(l.component) - z.transpose()) / var;
    }
    loss *= inv_n;
    if (on_epoch) on_epoch(epoch, loss);
    d_means *= inv_n;
    const Eigen::VectorXd d_logits = gmm.weights - counts * inv_n;

    mean_velocity = cfg.momentum * mean_velocity - cfg.lr_means * d_means;
    logit_velocity = cfg.momentum * logit_velocity - cfg.lr_weights * d_logits;
    gmm.means += mean_velocity;
    logits += logit_velocity;
  }
  gmm.weights = softmax(logits);
  return gmm;
}

}  // namespace gcrf
