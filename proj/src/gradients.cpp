// SPDX-License-Identifier: Apache-2.0
//
// Backward pass of the G-CRF layer. For x = A^{-1} B:
//   dL/dB = A^{-T} dL/dx = A^{-1} dL/dx      (A symmetric)
//   dL/dA = -(dL/dB) x^T
// The minus sign is what central differences confirm; the product
// (dL/dB) x^T alone has the wrong sign.
#include <atomic>

#include "gcrf/error.hpp"
#include "gcrf/system.hpp"

namespace gcrf {
namespace {

std::atomic<bool> g_flip_hoc_sign{false};

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void set_hoc_sign_flip_for_testing(bool flip) { g_flip_hoc_sign = flip; }

Eigen::VectorXd grad_unary(const GcrfSystem& sys, const Eigen::VectorXd& dl_dx) {
  return sys.solve_rhs(dl_dx);
}

Eigen::MatrixXd grad_hoc_from_unary(const Eigen::VectorXd& g, const Eigen::VectorXd& x) {
  if (g.size() != x.size()) throw Error(ErrorKind::kBadInput, "grad_hoc: size mismatch");
  const double sign = g_flip_hoc_sign ? 1.0 : -1.0;
  const Eigen::MatrixXd outer = g * x.transpose();
  return sign * 0.5 * (outer + outer.transpose());
}

Eigen::MatrixXd grad_hoc(const GcrfSystem& sys, const Eigen::VectorXd& dl_dx, const Eigen::VectorXd& x) {
  return grad_hoc_from_unary(grad_unary(sys, dl_dx), x);
}

Eigen::MatrixXd grad_similarity(const SimilarityMatrix& similarity, const Eigen::MatrixXd& dl_da) {
  const Eigen::Index p = similarity.rows.rows();
  if (dl_da.rows() != p || dl_da.cols() != p) throw Error(ErrorKind::kBadInput, "grad_similarity: size mismatch");
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(p, p) - similarity.rows;
  return -(m * dl_da + m * dl_da.transpose());
}

Eigen::MatrixXd grad_gram(const SimilarityMatrix& similarity, const Eigen::MatrixXd& dl_ds, double temperature) {
  const Eigen::MatrixXd& s = similarity.rows;
  if (dl_ds.rows() != s.rows() || dl_ds.cols() != s.cols()) {
    throw Error(ErrorKind::kBadInput, "grad_gram: size mismatch");
  }
  const Eigen::VectorXd row_dot = s.cwiseProduct(dl_ds).rowwise().sum();
  return (s.array() * (dl_ds.colwise() - row_dot).array()).matrix() / temperature;
}

Eigen::MatrixXd grad_embeddings(const SimilarityMatrix& similarity, const PixelEmbeddings& emb,
                                const Eigen::MatrixXd& dl_da, const SimilarityOptions& opts) {
  const Eigen::MatrixXd dl_dgram = grad_gram(similarity, grad_similarity(similarity, dl_da), opts.temperature);
  const Eigen::MatrixXd sym = dl_dgram + dl_dgram.transpose();
  if (!opts.normalize_columns) return emb.values * sym;

  Eigen::MatrixXd unit = emb.values;
  Eigen::VectorXd norms(unit.cols());
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    norms[j] = unit.col(j).norm();
    if (norms[j] > 0.0) unit.col(j) /= norms[j];
  }
  const Eigen::MatrixXd d_unit = unit * sym;
  Eigen::MatrixXd out(emb.values.rows(), emb.values.cols());
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    if (norms[j] == 0.0) {
      out.col(j).setZero();
      continue;
    }
    out.col(j) = (d_unit.col(j) - unit.col(j) * unit.col(j).dot(d_unit.col(j))) / norms[j];
  }
  return out;
}

GcrfBackward backward(const GcrfSystem& sys, const Solution& forward, const Eigen::VectorXd& dl_dx_a,
                      const Eigen::VectorXd& dl_dx_b) {
  GcrfBackward out;
  out.d_rhs_a = grad_unary(sys, dl_dx_a);
  out.d_rhs_b = grad_unary(sys, dl_dx_b);
  out.d_matrix = grad_hoc_from_unary(out.d_rhs_a, as_vector(forward.field.a)) +
                 grad_hoc_from_unary(out.d_rhs_b, as_vector(forward.field.b));
  const Eigen::Index p = sys.pixels();
  out.d_alpha_a = Eigen::VectorXd::Zero(p);
  out.d_alpha_b = Eigen::VectorXd::Zero(p);
  if (sys.mask().empty()) return out;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!sys.mask()[i]) continue;
    out.d_alpha_a[i] = sys.beta() * out.d_rhs_a[i];
    out.d_alpha_b[i] = sys.beta() * out.d_rhs_b[i];
  }
  return out;
}

}  // namespace gcrf
