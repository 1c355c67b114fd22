// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Tolerances and time
// budgets are pinned here; a criterion that overruns its budget fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "gcrf/color_io.hpp"
#include "gcrf/edits.hpp"
#include "gcrf/evaluation.hpp"
#include "gcrf/gradcheck.hpp"
#include "gcrf/metrics.hpp"
#include "gcrf/pipeline.hpp"
#include "gcrf/service.hpp"
#include "gcrf/synthetic.hpp"
#include "gcrf/system.hpp"
#include "json.hpp"

namespace gcrf {
namespace {

// Gradient suite.
constexpr double kGradTolerance = 1e-5;
constexpr int kGradInstances = 100;
// Solver suite.
constexpr double kOracleAgreement = 1e-8;
constexpr double kFixedPointTolerance = 1e-10;
constexpr int kSolverSystems = 50;
// Controllability.
constexpr int kEvalImages = 20;
constexpr int kEvalSize = 32;
constexpr double kMinGap = 0.5;
// Edit propagation (scaled chroma units).
constexpr double kRegionStd = 1e-3;
constexpr double kRegionColor = 1e-2;
// Mixture stage.
constexpr double kMeanRecovery = 0.05;
constexpr double kPurity = 0.95;
constexpr double kSingleMean = 1e-3;
// Toy pipeline.
constexpr double kModeDistance = 0.1;
constexpr double kHocSlack = 1.0;
// Color round-trip.
constexpr int kMaxChannelError = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Outcome gradient_suite() {
  GradcheckConfig cfg;
  cfg.instances = kGradInstances;
  cfg.min_pixels = 4;
  cfg.max_pixels = 36;
  cfg.min_dim = 1;
  cfg.max_dim = 8;
  cfg.tolerance = kGradTolerance;
  const GradcheckReport r = run_gradcheck(cfg);
  std::string detail;
  double worst = 0.0;
  for (const auto& p : r.paths) {
    detail += fmt("%s %.2e, ", p.name.c_str(), p.max_error);
    worst = std::max(worst, p.max_error);
  }
  detail += fmt("max %.2e <= %.0e over %d instances", worst, kGradTolerance, kGradInstances);
  return {r.pass(), detail};
}

Outcome solver_suite() {
  Rng rng(2024);
  double worst_agree = 0.0, worst_residual = 0.0, worst_fixed = 0.0, worst_cond = 0.0;
  int convex_failures = 0;
  for (int n = 0; n < kSolverSystems; ++n) {
    const int p = 4 + static_cast<int>(rng.below(33));
    const int d = 1 + static_cast<int>(rng.below(8));
    PixelEmbeddings e;
    e.values = Eigen::MatrixXd(d, p);
    // The gradient checker's family; see the ledger on conditioning.
    for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values.data()[i] = 0.7 * rng.normal();
    SimilarityOptions so;
    so.temperature = 0.5 + 1.5 * rng.uniform();
    so.normalize_columns = n % 2 == 1;
    const SimilarityMatrix s = build_similarity(e, so);
    Constraints c(p, 1, 0.5 + 9.5 * rng.uniform());
    for (int i = 0; i < p; ++i) {
      c.mask[i] = rng.uniform() < 0.3 ? 1 : 0;
      c.target_a[i] = rng.normal();
      c.target_b[i] = rng.normal();
    }
    c.mask[rng.below(p)] = 1;

    AssembleOptions lu;
    lu.force_lu = true;
    for (const AssembleOptions& opts : {AssembleOptions{}, lu}) {
      const GcrfSystem sys = assemble(s, c, opts);
      const Solution sol = solve(sys);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(sys.matrix());
      worst_cond = std::max(worst_cond, svd.singularValues()(0) / svd.singularValues()(p - 1));
      worst_residual = std::max(worst_residual, sol.max_residual());
      for (Chroma ch : {Chroma::kA, Chroma::kB}) {
        const Eigen::VectorXd x = vec(ch == Chroma::kA ? sol.field.a : sol.field.b);
        const CgResult cg = cg_solve_oracle(sys, ch, 1e-13);
        worst_agree = std::max(worst_agree, (x - cg.x).cwiseAbs().maxCoeff());
        // Strict convexity: every small perturbation raises the energy.
        const double e0 = energy(sys, ch, x);
        for (int k = 0; k < 4; ++k) {
          Eigen::VectorXd delta(p);
          for (int i = 0; i < p; ++i) delta[i] = rng.normal();
          delta *= 1e-3 / delta.norm();
          if (!(energy(sys, ch, x + delta) > e0)) ++convex_failures;
        }
      }
    }

    Constraints flat = c;
    const double ca = rng.normal(), cb = rng.normal();
    std::fill(flat.target_a.begin(), flat.target_a.end(), ca);
    std::fill(flat.target_b.begin(), flat.target_b.end(), cb);
    const Solution fixed = solve(assemble(s, flat));
    worst_residual = std::max(worst_residual, fixed.max_residual());
    worst_fixed = std::max({worst_fixed, (vec(fixed.field.a).array() - ca).abs().maxCoeff(),
                            (vec(fixed.field.b).array() - cb).abs().maxCoeff()});
  }
  const bool pass = worst_agree <= kOracleAgreement && worst_residual <= kResidualBound &&
                    worst_fixed <= kFixedPointTolerance && convex_failures == 0;
  return {pass, fmt("%d systems: |x - x_cg| %.1e <= %.0e, residual %.1e <= %.0e, fixed point %.1e <= %.0e, "
                    "convexity failures %d, max cond %.1e",
                    kSolverSystems, worst_agree, kOracleAgreement, worst_residual, kResidualBound, worst_fixed,
                    kFixedPointTolerance, convex_failures, worst_cond)};
}

Outcome controllability() {
  const std::vector<EvalImage> images = synthetic_eval_images(kEvalImages, kEvalSize, 1000);
  ControllabilityConfig cfg;
  cfg.points = {10, 50, 100};
  const ControllabilityReport r = run_controllability(images, cfg);
  bool pass = r.rows.size() == 3;
  int singular = 0;
  std::string detail;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    singular += r.rows[i].singular;
    detail += fmt("|H|=%d %.2f dB, ", r.rows[i].points, r.rows[i].mean_psnr);
    if (i > 0 && r.rows[i].mean_psnr - r.rows[i - 1].mean_psnr < kMinGap) pass = false;
  }
  if (singular != 0) pass = false;

  // One edit on a constant image must reproduce its color exactly.
  const GrayImage flat(kEvalSize, kEvalSize, 0.5);
  ColorFieldLab truth(kEvalSize, kEvalSize);
  std::fill(truth.a.begin(), truth.a.end(), 23.0);
  std::fill(truth.b.begin(), truth.b.end(), -41.0);
  EditSet one;
  one.edits = {{11, 20, 23.0, -41.0}};
  const double cap = chroma_psnr(propagate(flat, one, cfg.propagate).grid_chroma, truth);
  if (cap != kPsnrCap) pass = false;
  detail += fmt("gaps >= %.1f dB, singular runs %d, single-edit constant image %.1f dB", kMinGap, singular, cap);
  return {pass, detail};
}

Outcome edit_propagation() {
  const SyntheticImage img = two_region_image(8, 8, 0.2, 0.8);
  PropagateOptions opts;
  opts.grid_w = opts.grid_h = 8;
  EditSet edits;
  edits.edits = {{3, 1, 40.0, -30.0}, {4, 6, -25.0, 45.0}};
  const PropagateResult r = propagate(img.gray, edits, opts);
  double worst_std = 0.0, worst_color = 0.0;
  for (const Edit& e : edits.edits) {
    const int region = img.region[e.row * 8 + e.col];
    for (int ch = 0; ch < 2; ++ch) {
      const auto& plane = ch == 0 ? r.grid_chroma.a : r.grid_chroma.b;
      double sum = 0.0, sq = 0.0;
      int n = 0;
      for (int p = 0; p < 64; ++p) {
        if (img.region[p] != region) continue;
        const double v = plane[p] / kChromaScale;
        sum += v, sq += v * v, ++n;
      }
      const double mean = sum / n;
      worst_std = std::max(worst_std, std::sqrt(std::max(0.0, sq / n - mean * mean)));
      worst_color = std::max(worst_color, std::abs(mean - (ch == 0 ? e.a : e.b) / kChromaScale));
    }
  }
  const bool pass = worst_std <= kRegionStd && worst_color <= kRegionColor &&
                    img.region[3 * 8 + 1] != img.region[4 * 8 + 6];
  return {pass, fmt("region std %.1e <= %.0e, color error %.1e <= %.0e", worst_std, kRegionStd, worst_color,
                    kRegionColor)};
}

Outcome mixture_suite() {
  bool pass = true;
  std::string detail;
  for (int k : {2, 3}) {
    Rng rng(500 + k);
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, 4);
    for (int i = 0; i < k; ++i) centers(i, i) = 2.0;
    std::vector<Eigen::VectorXd> z;
    std::vector<int> labels;
    for (int i = 0; i < k; ++i) {
      for (int n = 0; n < 2000 / k; ++n) {
        Eigen::VectorXd v = centers.row(i).transpose();
        for (Eigen::Index j = 0; j < v.size(); ++j) v[j] += 0.1 * rng.normal();
        z.push_back(v);
        labels.push_back(i);
      }
    }
    const GmmParams g = stage2_fit(init_gmm(z, k, 0.1), z, Stage2Config{});
    double worst = 0.0;
    for (int i = 0; i < k; ++i) {
      double best = 1e9;
      for (int m = 0; m < k; ++m) best = std::min(best, (g.means.row(m) - centers.row(i)).norm());
      worst = std::max(worst, best);
    }
    std::map<std::pair<int, int>, int> counts;
    for (std::size_t n = 0; n < z.size(); ++n) ++counts[{mdn_loss(g, z[n]).component, labels[n]}];
    std::map<int, int> majority;
    for (const auto& [key, c] : counts) majority[key.first] = std::max(majority[key.first], c);
    int agree = 0;
    for (const auto& [m, c] : majority) agree += c;
    const double purity = static_cast<double>(agree) / z.size();
    if (worst > kMeanRecovery || purity < kPurity) pass = false;
    detail += fmt("k=%d mean error %.3f <= %.2f, purity %.3f >= %.2f; ", k, worst, kMeanRecovery, purity, kPurity);
  }

  Rng rng(77);
  std::vector<Eigen::VectorXd> z;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
  for (int n = 0; n < 2000; ++n) {
    Eigen::VectorXd v(4);
    for (int j = 0; j < 4; ++j) v[j] = 0.5 * j + rng.normal();
    mean += v;
    z.push_back(v);
  }
  mean /= 2000.0;
  const GmmParams one = stage2_fit(init_gmm(z, 1, 0.1), z, Stage2Config{});
  const double err = (one.means.row(0).transpose() - mean).cwiseAbs().maxCoeff();
  if (err > kSingleMean) pass = false;
  detail += fmt("M=1 |mu - mean| %.1e <= %.0e", err, kSingleMean);
  return {pass, detail};
}

Outcome toy_pipeline() {
  constexpr int kSize = 16;
  std::vector<TrainingExample> train_set, held_out;
  for (const auto& s : two_mode_dataset(64, kSize, 11)) train_set.push_back(make_example(s.gray, s.chroma, s.mode));
  const std::vector<SyntheticImage> test_images = two_mode_dataset(8, kSize, 99);
  for (const auto& s : test_images) held_out.push_back(make_example(s.gray, s.chroma, s.mode));

  TrainConfig cfg;
  cfg.components = 8;
  const TrainedModel model = train(train_set, cfg);

  Rng rng(5);
  double unary = 0.0, hoc = 0.0;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    unary += chroma_psnr(reconstruct(model.vae, held_out[i], Phase::kUnary, 1.0, kTestBeta, rng),
                         test_images[i].chroma);
    hoc += chroma_psnr(reconstruct(model.vae, held_out[i], Phase::kHoc, 0.10, kTestBeta, rng),
                       test_images[i].chroma);
  }
  unary /= static_cast<double>(held_out.size());
  hoc /= static_cast<double>(held_out.size());

  const SampleResult samples = sample_diverse(model, test_images[0].gray, 8, SampleOptions{}, rng);
  // Image-mean chroma of each sample, scaled.
  std::vector<Eigen::Vector2d> means;
  for (const auto& s : samples.samples) {
    means.emplace_back(vec(s.a).mean() / kChromaScale, vec(s.b).mean() / kChromaScale);
  }
  double farthest = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    for (std::size_t j = i + 1; j < means.size(); ++j) farthest = std::max(farthest, (means[i] - means[j]).norm());
  }
  const double variance = diversity(samples.samples).variance;
  const bool pass = farthest > kModeDistance && variance > 0.0 && hoc >= unary - kHocSlack;
  return {pass, fmt("max mean-chroma distance %.3f > %.1f, diversity variance %.4f > 0, hoc@0.10 %.2f dB >= "
                    "unary %.2f dB - %.0f",
                    farthest, kModeDistance, variance, hoc, unary, kHocSlack)};
}

Outcome metrics_identities() {
  Rng rng(3);
  auto field = [&rng] {
    ColorFieldLab f(12, 12);
    for (std::size_t i = 0; i < f.size(); ++i) f.a[i] = 50.0 * rng.normal(), f.b[i] = 50.0 * rng.normal();
    return f;
  };
  const ColorFieldLab x = field();
  const std::vector<double> ux = unit_chroma(x.a);
  const double self_ssim = ssim(ux, ux, 12, 12);

  SampleSet set;
  set.ground_truth = x;
  set.samples = {field(), field(), x, field()};
  const double eob_zero = error_of_best(set);

  const std::vector<ColorFieldLab> same = {x, x, x};
  const double var_same = diversity(same).variance;

  SampleSet grow;
  grow.ground_truth = x;
  bool monotone = true;
  double previous = std::numeric_limits<double>::infinity();
  for (int n = 0; n < 10; ++n) {
    grow.samples.push_back(field());
    const double e = error_of_best(grow);
    if (e > previous) monotone = false;
    previous = e;
  }
  const bool pass = self_ssim == 1.0 && eob_zero == 0.0 && var_same == 0.0 && monotone;
  return {pass, fmt("ssim(x,x) %.17g, eob with truth %.3g, variance of identical %.3g, eob monotone in N: %s",
                    self_ssim, eob_zero, var_same, monotone ? "yes" : "no")};
}

Outcome color_round_trip() {
  int lattice_misses = 0;
  for (int r = 0; r < 256; r += 17) {
    for (int g = 0; g < 256; g += 17) {
      for (int b = 0; b < 256; b += 17) {
        const Lab lab = srgb_to_lab(r, g, b);
        const Srgb8 back = lab_to_srgb(lab.L, lab.a, lab.b);
        if (back.r != r || back.g != g || back.b != b) ++lattice_misses;
      }
    }
  }
  int worst = 0;
  for (int r = 0; r < 256; ++r) {
    for (int g = 0; g < 256; ++g) {
      for (int b = 0; b < 256; ++b) {
        const Lab lab = srgb_to_lab(r, g, b);
        const Srgb8 back = lab_to_srgb(lab.L, lab.a, lab.b);
        worst = std::max({worst, std::abs(back.r - r), std::abs(back.g - g), std::abs(back.b - b)});
      }
    }
  }
  return {lattice_misses == 0 && worst <= kMaxChannelError,
          fmt("16^3 lattice misses %d, full cube max channel error %d <= %d", lattice_misses, worst,
              kMaxChannelError)};
}

Outcome service_reuse() {
  ServiceConfig cfg;
  Service service(cfg);
  const SyntheticImage img = two_region_image(48, 48, 0.2, 0.8);
  const auto png = encode_png(compose_rgb(img.gray, img.chroma));
  const Response created = service.create_session({reinterpret_cast<const char*>(png.data()), png.size()});
  if (created.status != 200) return {false, "session creation failed: " + created.body};
  const std::string id = nlohmann::json::parse(created.body).at("session_id").get<std::string>();

  auto edits = [](double shift) {
    EditSet e;
    e.edits = {{5, 4, 10.0 + shift, -20.0}, {20, 28, -30.0, 15.0 + shift}, {30, 10, 5.0, 5.0 - shift}};
    return edits_to_json(e);
  };
  const std::uint64_t before = factorization_count();
  std::vector<std::string> bodies;
  bool ok = true;
  for (int k = 0; k < 5; ++k) {
    const Response r = service.colorize(id, edits(3.0 * k));
    ok = ok && r.status == 200;
    bodies.push_back(r.body);
  }
  const std::uint64_t factorizations = factorization_count() - before;
  const bool replay = service.colorize(id, edits(0.0)).body == bodies[0];
  // A restarted service replaying the same requests returns the same bytes.
  Service restarted(cfg);
  restarted.create_session({reinterpret_cast<const char*>(png.data()), png.size()});
  const bool restart_replay = restarted.colorize(id, edits(0.0)).body == bodies[0];
  return {ok && factorizations == 1 && replay && restart_replay,
          fmt("factorizations over 5 same-mask calls %llu (want 1), replay identical: %s, after restart: %s",
              static_cast<unsigned long long>(factorizations), replay ? "yes" : "no",
              restart_replay ? "yes" : "no")};
}

}  // namespace
}  // namespace gcrf

int main() {
  using namespace gcrf;
  const std::vector<Criterion> criteria = {
      {"gradient-suite", 60, gradient_suite},
      {"solver-suite", 30, solver_suite},
      {"controllability-trend", 120, controllability},
      {"edit-propagation", 10, edit_propagation},
      {"mixture-suite", 60, mixture_suite},
      {"toy-pipeline", 600, toy_pipeline},
      {"metrics-identities", 5, metrics_identities},
      {"color-round-trip", 10, color_round_trip},
      {"service-reuse", 60, service_reuse},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = seconds <= c.budget_s;
    const bool pass = o.pass && in_budget;
    if (!pass) ++failures;
    std::printf("%s %-22s %s; %.1f s <= %.0f s%s\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(),
                seconds, c.budget_s, in_budget ? "" : " (over budget)");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
