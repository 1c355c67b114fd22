// SPDX-License-Identifier: Apache-2.0
#include "gcrf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "gcrf/error.hpp"
#include "gcrf/random.hpp"
#include "gcrf/similarity.hpp"
#include "gcrf/system.hpp"

namespace gcrf {
namespace {

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

struct Instance {
  PixelEmbeddings emb;
  SimilarityOptions opts;
  Constraints constraints;
  Eigen::VectorXd target_a;  // loss targets
  Eigen::VectorXd target_b;
};

double loss_of(const Solution& sol, const Instance& inst) {
  return 0.5 * ((as_vector(sol.field.a) - inst.target_a).squaredNorm() +
                (as_vector(sol.field.b) - inst.target_b).squaredNorm());
}

double loss_of(const GcrfSystem& sys, const Instance& inst) { return loss_of(solve(sys), inst); }

double loss_of_matrix(const Eigen::MatrixXd& a, const GcrfSystem& sys, const Instance& inst) {
  return loss_of(GcrfSystem::from_matrix(a, sys.rhs(Chroma::kA), sys.rhs(Chroma::kB)), inst);
}

Instance make_instance(const GradcheckConfig& cfg, int index, Rng& rng) {
  const int p = cfg.min_pixels + static_cast<int>(rng.below(cfg.max_pixels - cfg.min_pixels + 1));
  const int d = cfg.min_dim + static_cast<int>(rng.below(cfg.max_dim - cfg.min_dim + 1));
  Instance inst;
  inst.emb.values = Eigen::MatrixXd(d, p);
  for (Eigen::Index i = 0; i < inst.emb.values.size(); ++i) inst.emb.values.data()[i] = 0.7 * rng.normal();
  inst.opts.temperature = 0.5 + 1.5 * rng.uniform();
  inst.opts.normalize_columns = index % 2 == 1;
  inst.constraints = Constraints(p, 1, 0.5 + 4.5 * rng.uniform());
  for (int i = 0; i < p; ++i) {
    inst.constraints.mask[i] = rng.uniform() < 0.5 ? 1 : 0;
    inst.constraints.target_a[i] = 0.5 * rng.normal();
    inst.constraints.target_b[i] = 0.5 * rng.normal();
  }
  // A single constraint pins a constant field that ignores the similarity,
  // leaving nothing to check on the structure paths.
  while (inst.constraints.count() < 2) inst.constraints.mask[rng.below(p)] = 1;
  inst.target_a = Eigen::VectorXd(p);
  inst.target_b = Eigen::VectorXd(p);
  for (int i = 0; i < p; ++i) {
    inst.target_a[i] = 0.5 * rng.normal();
    inst.target_b[i] = 0.5 * rng.normal();
  }
  return inst;
}

// Normwise relative error between finite differences and the analytic values.
double compare(const std::vector<double>& fd, const std::vector<double>& analytic) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    diff = std::max(diff, std::abs(fd[i] - analytic[i]));
    scale = std::max(scale, std::abs(analytic[i]));
  }
  if (scale == 0.0) return diff;
  return diff / scale;
}

void record(GradcheckPath& path, const std::vector<double>& fd, const std::vector<double>& analytic) {
  path.max_error = std::max(path.max_error, compare(fd, analytic));
  path.checks += static_cast<long>(fd.size());
}

}  // namespace

void GradcheckConfig::validate() const {
  if (instances < 1) throw Error(ErrorKind::kBadInput, "instances must be >= 1");
  if (min_pixels < 1 || max_pixels < min_pixels) throw Error(ErrorKind::kBadInput, "bad pixel range");
  if (min_dim < 1 || max_dim < min_dim) throw Error(ErrorKind::kBadInput, "bad embedding dimension range");
  if (!(tolerance > 0.0)) throw Error(ErrorKind::kBadInput, "tolerance must be > 0");
  if (!(step > 0.0)) throw Error(ErrorKind::kBadInput, "step must be > 0");
}

bool GradcheckReport::pass() const {
  return std::all_of(paths.begin(), paths.end(), [](const GradcheckPath& p) { return p.pass; });
}

GradcheckReport run_gradcheck(const GradcheckConfig& cfg) {
  cfg.validate();
  GradcheckReport report;
  report.tolerance = cfg.tolerance;
  report.paths = {{"rhs"}, {"alpha"}, {"hoc"}, {"similarity"}, {"embeddings"}};
  GradcheckPath& rhs_path = report.paths[0];
  GradcheckPath& alpha_path = report.paths[1];
  GradcheckPath& hoc_path = report.paths[2];
  GradcheckPath& sim_path = report.paths[3];
  GradcheckPath& emb_path = report.paths[4];

  Rng rng(cfg.seed);
  const double h = cfg.step;
  auto central = [h](const std::function<double(double)>& f) { return (f(h) - f(-h)) / (2.0 * h); };

  for (int n = 0; n < cfg.instances; ++n) {
    const Instance inst = make_instance(cfg, n, rng);
    const Eigen::Index p = inst.emb.pixels();
    const SimilarityMatrix s = build_similarity(inst.emb, inst.opts);
    const GcrfSystem sys = GcrfSystem::assemble(s, inst.constraints);
    const Solution sol = solve(sys);
    const Eigen::VectorXd dl_a = as_vector(sol.field.a) - inst.target_a;
    const Eigen::VectorXd dl_b = as_vector(sol.field.b) - inst.target_b;
    const GcrfBackward back = backward(sys, sol, dl_a, dl_b);

    std::vector<double> fd, an;
    for (Chroma c : {Chroma::kA, Chroma::kB}) {
      const Eigen::VectorXd& grad = c == Chroma::kA ? back.d_rhs_a : back.d_rhs_b;
      for (Eigen::Index i = 0; i < p; ++i) {
        fd.push_back(central([&](double e) {
          Eigen::VectorXd ra = sys.rhs(Chroma::kA);
          Eigen::VectorXd rb = sys.rhs(Chroma::kB);
          (c == Chroma::kA ? ra : rb)[i] += e;
          return loss_of(GcrfSystem::from_matrix(sys.matrix(), ra, rb), inst);
        }));
        an.push_back(grad[i]);
      }
    }
    record(rhs_path, fd, an);

    fd.clear();
    an.clear();
    for (Chroma c : {Chroma::kA, Chroma::kB}) {
      const Eigen::VectorXd& grad = c == Chroma::kA ? back.d_alpha_a : back.d_alpha_b;
      for (Eigen::Index i = 0; i < p; ++i) {
        if (!inst.constraints.mask[i]) continue;
        fd.push_back(central([&](double e) {
          Constraints moved = inst.constraints;
          (c == Chroma::kA ? moved.target_a : moved.target_b)[i] += e;
          return loss_of(GcrfSystem::assemble(s, moved), inst);
        }));
        an.push_back(grad[i]);
      }
    }
    record(alpha_path, fd, an);

    fd.clear();
    an.clear();
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = i; j < p; ++j) {
        // Symmetric perturbation of A_ij and A_ji together.
        fd.push_back(central([&](double e) {
          Eigen::MatrixXd a = sys.matrix();
          a(i, j) += e;
          if (j != i) a(j, i) += e;
          return loss_of_matrix(a, sys, inst);
        }));
        an.push_back(i == j ? back.d_matrix(i, i) : 2.0 * back.d_matrix(i, j));
      }
    }
    record(hoc_path, fd, an);

    fd.clear();
    an.clear();
    const Eigen::MatrixXd d_sim = grad_similarity(s, back.d_matrix);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        fd.push_back(central([&](double e) {
          SimilarityMatrix moved = s;
          moved.rows(i, j) += e;
          return loss_of(GcrfSystem::assemble(moved, inst.constraints), inst);
        }));
        an.push_back(d_sim(i, j));
      }
    }
    record(sim_path, fd, an);

    fd.clear();
    an.clear();
    const Eigen::MatrixXd d_emb = grad_embeddings(s, inst.emb, back.d_matrix, inst.opts);
    for (Eigen::Index k = 0; k < inst.emb.values.size(); ++k) {
      fd.push_back(central([&](double e) {
        PixelEmbeddings moved = inst.emb;
        moved.values.data()[k] += e;
        return loss_of(GcrfSystem::assemble(build_similarity(moved, inst.opts), inst.constraints), inst);
      }));
      an.push_back(d_emb.data()[k]);
    }
    record(emb_path, fd, an);
  }

  for (GradcheckPath& path : report.paths) path.pass = path.max_error <= cfg.tolerance;
  return report;
}

std::string format_gradcheck(const GradcheckReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %14s %10s  %s\n", "path", "max_rel_err", "checks", "status");
  out += line;
  for (const GradcheckPath& p : report.paths) {
    std::snprintf(line, sizeof line, "%-12s %14.3e %10ld  %s\n", p.name.c_str(), p.max_error, p.checks,
                  p.pass ? "ok" : "FAIL");
    out += line;
  }
  std::snprintf(line, sizeof line, "tolerance %.1e: %s\n", report.tolerance, report.pass() ? "pass" : "fail");
  out += line;
  return out;
}

}  // namespace gcrf
