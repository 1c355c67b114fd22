// SPDX-License-Identifier: Apache-2.0
//
// Gaussian CRF output layer. For each chroma channel the energy
//
//   E(x) = 1/2 |(I - S) x|^2 + beta/2 |H x - alpha|^2
//
// is minimized by solving A x = beta H^T alpha with
// A = (I - S)^T (I - S) + beta H^T H. Both channels share A, so one
// factorization serves both right-hand sides.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gcrf/image.hpp"
#include "gcrf/similarity.hpp"

namespace gcrf {

enum class Chroma { kA = 0, kB = 1 };

/// Diagonal of H, per-channel targets alpha (solver units), and beta.
/// Targets off the mask are ignored.
struct Constraints {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;
  std::vector<double> target_a;
  std::vector<double> target_b;
  double beta = 5.0;

  Constraints() = default;
  Constraints(int w, int h, double beta_value);

  std::size_t pixels() const { return mask.size(); }
  std::size_t count() const;
  const std::vector<double>& target(Chroma c) const { return c == Chroma::kA ? target_a : target_b; }
};

enum class Factorization { kCholesky, kLu };

struct AssembleOptions {
  double ridge = 0.0;     ///< adds ridge * I; off unless explicitly requested
  bool force_lu = false;  ///< skip the Cholesky attempt
};

/// Relative pivot threshold below which the system is reported singular.
inline constexpr double kSingularPivot = 1e-12;
/// Bound on |A x - rhs| / |rhs| enforced on every solve.
inline constexpr double kResidualBound = 1e-10;

class GcrfSystem {
 public:
  static GcrfSystem assemble(const SimilarityMatrix& similarity, const Constraints& constraints,
                             const AssembleOptions& opts = {});

  /// Same as assemble, starting from a precomputed smoothness term
  /// smoothness_term(similarity), which does not depend on the constraints.
  static GcrfSystem assemble_from(const Eigen::MatrixXd& smoothness, const Constraints& constraints,
                                  const AssembleOptions& opts = {});

  /// Wraps an explicit symmetric matrix (tests, diagnostics). Energy constants are zero.
  static GcrfSystem from_matrix(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs_a,
                                const Eigen::VectorXd& rhs_b, const AssembleOptions& opts = {});

  /// Same A and factorization, new targets. The mask and beta must match.
  GcrfSystem with_targets(const Constraints& constraints) const;

  int pixels() const { return static_cast<int>(matrix_->rows()); }
  int width() const { return width_; }
  int height() const { return height_; }
  double beta() const { return beta_; }
  const Eigen::MatrixXd& matrix() const { return *matrix_; }
  const Eigen::VectorXd& rhs(Chroma c) const { return c == Chroma::kA ? rhs_a_ : rhs_b_; }
  Factorization factorization() const;
  const std::vector<std::uint8_t>& mask() const { return mask_; }

  /// Solves A y = rhs against the cached factorization, with up to two
  /// steps of iterative refinement. Throws kResidualBreach past kResidualBound
  /// (a zero rhs gives y = 0).
  Eigen::VectorXd solve_rhs(const Eigen::VectorXd& rhs, double* relative_residual = nullptr) const;

  /// 1/2 x^T A x - rhs^T x + C with C = beta/2 sum_{mask} alpha^2.
  double energy(Chroma c, const Eigen::VectorXd& x) const;

 private:
  struct Factor;

  GcrfSystem() = default;
  void factorize(const AssembleOptions& opts);

  std::shared_ptr<const Eigen::MatrixXd> matrix_;
  std::shared_ptr<const Factor> factor_;
  Eigen::VectorXd rhs_a_;
  Eigen::VectorXd rhs_b_;
  double constant_a_ = 0.0;
  double constant_b_ = 0.0;
  double beta_ = 0.0;
  int width_ = 0;
  int height_ = 1;
  std::vector<std::uint8_t> mask_;
};

struct Solution {
  ColorFieldLab field;  ///< grid resolution, solver units
  double residual_a = 0.0;
  double residual_b = 0.0;

  double max_residual() const { return residual_a > residual_b ? residual_a : residual_b; }
};

/// (I - S)^T (I - S).
Eigen::MatrixXd smoothness_term(const SimilarityMatrix& similarity);

inline GcrfSystem assemble(const SimilarityMatrix& s, const Constraints& c,
                           const AssembleOptions& opts = {}) {
  return GcrfSystem::assemble(s, c, opts);
}

double energy(const GcrfSystem& sys, Chroma c, const Eigen::VectorXd& x);
Solution solve(const GcrfSystem& sys);

/// Number of matrix factorizations performed by this process.
std::uint64_t factorization_count();

// ---------------------------------------------------------------------------
// Backward pass.

/// Solves A g = dL/dx; A is symmetric so g is dL/dB for the rhs B.
Eigen::VectorXd grad_unary(const GcrfSystem& sys, const Eigen::VectorXd& dl_dx);

/// dL/dA = -g x^T, symmetrized. x must be the forward solution for the
/// channel that produced dl_dx.
Eigen::MatrixXd grad_hoc(const GcrfSystem& sys, const Eigen::VectorXd& dl_dx, const Eigen::VectorXd& x);
Eigen::MatrixXd grad_hoc_from_unary(const Eigen::VectorXd& g, const Eigen::VectorXd& x);

/// Pulls dL/dA back through A = (I - S)^T (I - S) + ...
Eigen::MatrixXd grad_similarity(const SimilarityMatrix& similarity, const Eigen::MatrixXd& dl_da);

/// Pulls dL/dS back through the row softmax of gram / temperature.
Eigen::MatrixXd grad_gram(const SimilarityMatrix& similarity, const Eigen::MatrixXd& dl_ds,
                          double temperature);

/// Full chain dL/dA -> dL/d(embeddings), both occurrences of the embeddings
/// in the Gram product (and the column normalization, when enabled).
Eigen::MatrixXd grad_embeddings(const SimilarityMatrix& similarity, const PixelEmbeddings& emb,
                                const Eigen::MatrixXd& dl_da, const SimilarityOptions& opts);

struct GcrfBackward {
  Eigen::VectorXd d_rhs_a;    ///< dL/dB per channel
  Eigen::VectorXd d_rhs_b;
  Eigen::VectorXd d_alpha_a;  ///< beta * H dL/dB
  Eigen::VectorXd d_alpha_b;
  Eigen::MatrixXd d_matrix;   ///< summed over channels, symmetric
};

GcrfBackward backward(const GcrfSystem& sys, const Solution& forward,
                      const Eigen::VectorXd& dl_dx_a, const Eigen::VectorXd& dl_dx_b);

/// Mutation hook for the gradient checker: flips the sign of grad_hoc.
void set_hoc_sign_flip_for_testing(bool flip);

// ---------------------------------------------------------------------------
// Independent conjugate-gradient solver used as a test oracle.

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Plain CG to |r|/|b| <= tol, at most max_iterations (default 50 P; rounding slows CG on ill-conditioned systems).
/// Throws kNoConvergence on a non-positive curvature step or iteration cap.
CgResult cg_solve_oracle(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs, double tol = 1e-10,
                         int max_iterations = -1);
CgResult cg_solve_oracle(const GcrfSystem& sys, Chroma c, double tol = 1e-10);

// "GCRFSYS1" dump: magic, P and channel count (2) as u32 LE, then A
// column-major, rhs_a, rhs_b as f64 LE.
std::vector<std::uint8_t> encode_system(const GcrfSystem& sys);
void save_system(const std::filesystem::path& path, const GcrfSystem& sys);

struct SystemDump {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs_a;
  Eigen::VectorXd rhs_b;
};
SystemDump decode_system(std::span<const std::uint8_t> bytes);

}  // namespace gcrf
