// SPDX-License-Identifier: Apache-2.0
#include "gcrf/system.hpp"

#include <atomic>
#include <cmath>
#include <optional>
#include <string>

#include "gcrf/binary_io.hpp"
#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"

namespace gcrf {
namespace {

std::atomic<std::uint64_t> g_factorizations{0};

double relative_residual(const Eigen::MatrixXd& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b) {
  const double bn = b.norm();
  const double rn = (a * x - b).norm();
  return bn > 0.0 ? rn / bn : rn;
}

}  // namespace

Constraints::Constraints(int w, int h, double beta_value)
    : width(w),
      height(h),
      mask(static_cast<std::size_t>(w) * h, 0),
      target_a(static_cast<std::size_t>(w) * h, 0.0),
      target_b(static_cast<std::size_t>(w) * h, 0.0),
      beta(beta_value) {}

std::size_t Constraints::count() const {
  std::size_t n = 0;
  for (auto m : mask) n += m ? 1 : 0;
  return n;
}

struct GcrfSystem::Factor {
  Factorization method = Factorization::kCholesky;
  std::optional<Eigen::LLT<Eigen::MatrixXd>> llt;
  std::optional<Eigen::PartialPivLU<Eigen::MatrixXd>> lu;

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    return method == Factorization::kCholesky ? Eigen::VectorXd(llt->solve(b)) : Eigen::VectorXd(lu->solve(b));
  }
};

void GcrfSystem::factorize(const AssembleOptions& opts) {
  const Eigen::MatrixXd& a = *matrix_;
  const double scale = a.cwiseAbs().maxCoeff();
  const double threshold = kSingularPivot * (scale > 0.0 ? scale : 1.0);
  auto factor = std::make_shared<Factor>();
  ++g_factorizations;

  if (!opts.force_lu) {
    factor->llt.emplace(a);
    if (factor->llt->info() == Eigen::Success) {
      const double min_pivot = factor->llt->matrixLLT().diagonal().array().square().minCoeff();
      if (min_pivot < threshold) {
        throw Error(ErrorKind::kSingularSystem,
                    "system matrix is singular (Cholesky pivot " + std::to_string(min_pivot) +
                        "); an empty edit mask leaves constant fields unconstrained");
      }
      factor->method = Factorization::kCholesky;
      factor_ = std::move(factor);
      return;
    }
    factor->llt.reset();
  }

  factor->lu.emplace(a);
  const double min_pivot = factor->lu->matrixLU().diagonal().cwiseAbs().minCoeff();
  if (!(min_pivot >= threshold)) {
    throw Error(ErrorKind::kSingularSystem,
                "system matrix is singular (LU pivot " + std::to_string(min_pivot) +
                    "); an empty edit mask leaves constant fields unconstrained");
  }
  factor->method = Factorization::kLu;
  factor_ = std::move(factor);
}

Eigen::MatrixXd smoothness_term(const SimilarityMatrix& similarity) {
  const Eigen::Index p = similarity.rows.rows();
  if (p == 0 || similarity.rows.cols() != p) throw Error(ErrorKind::kBadInput, "similarity must be square");
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(p, p) - similarity.rows;
  Eigen::MatrixXd lower = Eigen::MatrixXd::Zero(p, p);
  lower.selfadjointView<Eigen::Lower>().rankUpdate(m.transpose());
  Eigen::MatrixXd full = lower.selfadjointView<Eigen::Lower>();
  return full;
}

GcrfSystem GcrfSystem::assemble(const SimilarityMatrix& similarity, const Constraints& c,
                                const AssembleOptions& opts) {
  return assemble_from(smoothness_term(similarity), c, opts);
}

GcrfSystem GcrfSystem::assemble_from(const Eigen::MatrixXd& smoothness, const Constraints& c,
                                     const AssembleOptions& opts) {
  const Eigen::Index p = smoothness.rows();
  if (p == 0 || smoothness.cols() != p) throw Error(ErrorKind::kBadInput, "smoothness term must be square");
  if (c.mask.size() != static_cast<std::size_t>(p) || c.target_a.size() != c.mask.size() ||
      c.target_b.size() != c.mask.size()) {
    throw Error(ErrorKind::kBadInput, "constraint size does not match similarity size");
  }
  if (!(c.beta >= 0.0) || !std::isfinite(c.beta)) throw Error(ErrorKind::kBadInput, "beta must be finite and >= 0");

  GcrfSystem sys;
  sys.beta_ = c.beta;
  sys.width_ = c.width;
  sys.height_ = c.height;
  sys.mask_ = c.mask;

  Eigen::MatrixXd a = smoothness;
  sys.rhs_a_ = Eigen::VectorXd::Zero(p);
  sys.rhs_b_ = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!c.mask[i]) continue;
    if (!std::isfinite(c.target_a[i]) || !std::isfinite(c.target_b[i])) {
      throw Error(ErrorKind::kBadInput, "non-finite constraint target");
    }
    a(i, i) += c.beta;
    sys.rhs_a_[i] = c.beta * c.target_a[i];
    sys.rhs_b_[i] = c.beta * c.target_b[i];
    sys.constant_a_ += 0.5 * c.beta * c.target_a[i] * c.target_a[i];
    sys.constant_b_ += 0.5 * c.beta * c.target_b[i] * c.target_b[i];
  }
  if (opts.ridge > 0.0) a.diagonal().array() += opts.ridge;
  a = 0.5 * (a + a.transpose()).eval();
  sys.matrix_ = std::make_shared<const Eigen::MatrixXd>(std::move(a));
  sys.factorize(opts);
  return sys;
}

GcrfSystem GcrfSystem::from_matrix(const Eigen::MatrixXd& matrix, const Eigen::VectorXd& rhs_a,
                                   const Eigen::VectorXd& rhs_b, const AssembleOptions& opts) {
  const Eigen::Index p = matrix.rows();
  if (p == 0 || matrix.cols() != p || rhs_a.size() != p || rhs_b.size() != p) {
    throw Error(ErrorKind::kBadInput, "system dimensions disagree");
  }
  GcrfSystem sys;
  sys.width_ = static_cast<int>(p);
  sys.height_ = 1;
  sys.rhs_a_ = rhs_a;
  sys.rhs_b_ = rhs_b;
  Eigen::MatrixXd a = matrix;
  if (opts.ridge > 0.0) a.diagonal().array() += opts.ridge;
  sys.matrix_ = std::make_shared<const Eigen::MatrixXd>(0.5 * (a + a.transpose()));
  sys.factorize(opts);
  return sys;
}

GcrfSystem GcrfSystem::with_targets(const Constraints& c) const {
  if (c.mask != mask_ || c.beta != beta_) {
    throw Error(ErrorKind::kBadInput, "with_targets requires the same mask and beta");
  }
  GcrfSystem sys = *this;
  const Eigen::Index p = pixels();
  sys.rhs_a_.setZero(p);
  sys.rhs_b_.setZero(p);
  sys.constant_a_ = 0.0;
  sys.constant_b_ = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!c.mask[i]) continue;
    sys.rhs_a_[i] = beta_ * c.target_a[i];
    sys.rhs_b_[i] = beta_ * c.target_b[i];
    sys.constant_a_ += 0.5 * beta_ * c.target_a[i] * c.target_a[i];
    sys.constant_b_ += 0.5 * beta_ * c.target_b[i] * c.target_b[i];
  }
  return sys;
}

Factorization GcrfSystem::factorization() const { return factor_->method; }

Eigen::VectorXd GcrfSystem::solve_rhs(const Eigen::VectorXd& rhs, double* residual_out) const {
  if (rhs.size() != pixels()) throw Error(ErrorKind::kBadInput, "rhs size mismatch");
  const Eigen::MatrixXd& a = *matrix_;
  if (rhs.squaredNorm() == 0.0) {
    if (residual_out) *residual_out = 0.0;
    return Eigen::VectorXd::Zero(rhs.size());
  }
  Eigen::VectorXd x = factor_->solve(rhs);
  double res = relative_residual(a, x, rhs);
  for (int step = 0; step < 2 && res > 1e-14; ++step) {
    Eigen::VectorXd candidate = x + factor_->solve(rhs - a * x);
    const double cand_res = relative_residual(a, candidate, rhs);
    if (!(cand_res < res)) break;
    x = std::move(candidate);
    res = cand_res;
  }
  if (!(res <= kResidualBound)) {
    throw Error(ErrorKind::kResidualBreach, "solve residual " + std::to_string(res) + " exceeds bound");
  }
  if (residual_out) *residual_out = res;
  return x;
}

double GcrfSystem::energy(Chroma c, const Eigen::VectorXd& x) const {
  if (x.size() != pixels()) throw Error(ErrorKind::kBadInput, "energy: size mismatch");
  const double constant = c == Chroma::kA ? constant_a_ : constant_b_;
  return 0.5 * x.dot(*matrix_ * x) - rhs(c).dot(x) + constant;
}

double energy(const GcrfSystem& sys, Chroma c, const Eigen::VectorXd& x) { return sys.energy(c, x); }

Solution solve(const GcrfSystem& sys) {
  Solution out;
  out.field = ColorFieldLab(sys.width(), sys.height());
  const Eigen::VectorXd xa = sys.solve_rhs(sys.rhs(Chroma::kA), &out.residual_a);
  const Eigen::VectorXd xb = sys.solve_rhs(sys.rhs(Chroma::kB), &out.residual_b);
  out.field.a.assign(xa.data(), xa.data() + xa.size());
  out.field.b.assign(xb.data(), xb.data() + xb.size());
  return out;
}

std::uint64_t factorization_count() { return g_factorizations.load(); }

CgResult cg_solve_oracle(const Eigen::MatrixXd& a, const Eigen::VectorXd& rhs, double tol, int max_iterations) {
  const Eigen::Index n = a.rows();
  if (max_iterations < 0) max_iterations = static_cast<int>(50 * n);
  CgResult out;
  out.x = Eigen::VectorXd::Zero(n);
  const double bn = rhs.norm();
  if (bn == 0.0) return out;
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd d = r;
  double rr = r.squaredNorm();
  for (int it = 1; it <= max_iterations; ++it) {
    const Eigen::VectorXd ad = a * d;
    const double curvature = d.dot(ad);
    if (!(curvature > 0.0)) {
      throw Error(ErrorKind::kNoConvergence, "CG hit non-positive curvature; matrix is not SPD");
    }
    const double step = rr / curvature;
    out.x += step * d;
    r -= step * ad;
    const double rr_next = r.squaredNorm();
    out.iterations = it;
    // Recompute the true residual before declaring convergence.
    if (std::sqrt(rr_next) <= tol * bn) {
      r = rhs - a * out.x;
      if (r.norm() <= tol * bn) {
        out.relative_residual = r.norm() / bn;
        return out;
      }
      d = r;
      rr = r.squaredNorm();
      continue;
    }
    d = r + (rr_next / rr) * d;
    rr = rr_next;
  }
  throw Error(ErrorKind::kNoConvergence, "CG did not converge within " + std::to_string(max_iterations) + " iterations");
}

CgResult cg_solve_oracle(const GcrfSystem& sys, Chroma c, double tol) {
  return cg_solve_oracle(sys.matrix(), sys.rhs(c), tol);
}

std::vector<std::uint8_t> encode_system(const GcrfSystem& sys) {
  ByteWriter out;
  out.magic("GCRFSYS1");
  out.u32(static_cast<std::uint32_t>(sys.pixels()));
  out.u32(2);
  const auto& a = sys.matrix();
  out.f64s(std::span(a.data(), static_cast<std::size_t>(a.size())));
  out.f64s(std::span(sys.rhs(Chroma::kA).data(), static_cast<std::size_t>(sys.pixels())));
  out.f64s(std::span(sys.rhs(Chroma::kB).data(), static_cast<std::size_t>(sys.pixels())));
  return out.take();
}

void save_system(const std::filesystem::path& path, const GcrfSystem& sys) {
  write_file_bytes(path, encode_system(sys));
}

SystemDump decode_system(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  in.expect_magic("GCRFSYS1");
  const std::uint32_t p = in.u32();
  const std::uint32_t channels = in.u32();
  if (p == 0 || channels != 2) throw Error(ErrorKind::kBadInput, "bad GCRFSYS1 header");
  if (in.remaining() != (static_cast<std::size_t>(p) * p + 2 * p) * 8) {
    throw Error(ErrorKind::kBadInput, "GCRFSYS1 size does not match header");
  }
  SystemDump dump{Eigen::MatrixXd(p, p), Eigen::VectorXd(p), Eigen::VectorXd(p)};
  in.f64s(std::span(dump.matrix.data(), static_cast<std::size_t>(dump.matrix.size())));
  in.f64s(std::span(dump.rhs_a.data(), p));
  in.f64s(std::span(dump.rhs_b.data(), p));
  return dump;
}

}  // namespace gcrf
