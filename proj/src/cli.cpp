// SPDX-License-Identifier: Apache-2.0
#include "gcrf/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcrf/color_io.hpp"
#include "gcrf/edits.hpp"
#include "gcrf/error.hpp"
#include "gcrf/evaluation.hpp"
#include "gcrf/gradcheck.hpp"
#include "gcrf/http_binding.hpp"
#include "gcrf/metrics.hpp"
#include "gcrf/pipeline.hpp"
#include "gcrf/service.hpp"
#include "gcrf/synthetic.hpp"
#include "gcrf/system.hpp"
#include "httplib.h"
#include "json.hpp"

namespace gcrf {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// Registers options on a subcommand and remembers how to dump their values,
// so the resolved configuration can be written next to the outputs.
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file whose keys mirror the long flags");
    app_->add_flag("--config-priority", config_priority_, "let --config values override command-line flags");
  }

  template <typename T>
  CLI::Option* option(const std::string& name, T& value, const std::string& help) {
    dumpers_.push_back([name, &value](Json& j) { j[name] = value; });
    return app_->add_option("--" + name, value, help)->capture_default_str();
  }

  CLI::Option* flag(const std::string& name, bool& value, const std::string& help) {
    dumpers_.push_back([name, &value](Json& j) { j[name] = value; });
    return app_->add_flag("--" + name + ",!--no-" + name, value, help);
  }

  CLI::App* app() const { return app_; }

  Json resolved() const {
    Json j;
    for (const auto& dump : dumpers_) dump(j);
    return j;
  }

  // Applies the config file. Keys are long flag names without dashes.
  void apply_config() {
    if (config_path_.empty()) return;
    Json doc;
    try {
      doc = Json::parse(read_text_file(config_path_));
    } catch (const Json::exception& e) {
      throw Error(ErrorKind::kBadInput, "config: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw Error(ErrorKind::kBadInput, "config: top level must be an object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "config" || key == "config-priority") {
        throw Error(ErrorKind::kBadInput, "config: key '" + key + "' is not allowed in a config file");
      }
      CLI::Option* opt = app_->get_option_no_throw("--" + key);
      if (opt == nullptr) throw Error(ErrorKind::kBadInput, "config: unknown key '" + key + "'");
      if (opt->count() > 0 && !config_priority_) continue;
      opt->clear();
      auto add = [&](const Json& v) {
        if (v.is_string()) {
          opt->add_result(v.get<std::string>());
        } else if (v.is_boolean() || v.is_number()) {
          opt->add_result(v.dump());
        } else {
          throw Error(ErrorKind::kBadInput, "config: unsupported value for '" + key + "'");
        }
      };
      if (value.is_array()) {
        for (const auto& v : value) add(v);
      } else {
        add(value);
      }
      try {
        opt->run_callback();
      } catch (const CLI::Error& e) {
        throw Error(ErrorKind::kBadInput, "config: bad value for '" + key + "': " + e.what());
      }
    }
  }

 private:
  CLI::App* app_;
  std::string config_path_;
  bool config_priority_ = false;
  std::vector<std::function<void(Json&)>> dumpers_;
};

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text_file(path, j.dump(2) + "\n");
}

fs::path sibling(const fs::path& output, const std::string& suffix) {
  fs::path p = output;
  p.replace_extension();
  return p.string() + suffix;
}

BaselineFeatureWeights weights_from(const std::vector<double>& w) {
  if (w.size() != kBaselineFeatureCount) throw Error(ErrorKind::kBadInput, "weights needs 5 values");
  return {w[0], w[1], w[2], w[3], w[4]};
}

MaskSchedule parse_schedule(const std::string& text) {
  MaskSchedule s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::kBadInput, "schedule items look like epoch:fraction");
    try {
      std::size_t used = 0;
      const int epoch = std::stoi(item.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("epoch");
      const std::string frac = item.substr(colon + 1);
      const double fraction = std::stod(frac, &used);
      if (used != frac.size()) throw std::invalid_argument("fraction");
      s.stages.emplace_back(epoch, fraction);
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kBadInput, "bad schedule item '" + item + "'");
    }
  }
  s.validate();
  return s;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------

struct EmbeddingFlags {
  int grid = kDefaultGrid;
  double temperature = 1.0;
  bool normalize_columns = false;
  std::vector<double> weights{4.0, 1.0, 1.0, 1.0, 1.0};
  int embedding_dim = kBaselineFeatureCount;

  void add(Params& p) {
    p.option("grid", grid, "solver grid size (grid x grid)")->check(CLI::Range(1, 256));
    p.option("temperature", temperature, "softmax temperature")->check(CLI::PositiveNumber);
    p.flag("normalize-columns", normalize_columns, "unit-normalize embedding columns");
    p.option("weights", weights, "baseline feature weights: intensity,col,row,local_mean,local_std")
        ->expected(kBaselineFeatureCount)
        ->delimiter(',');
    p.option("embedding-dim", embedding_dim, "baseline embedding dimension")->check(CLI::Range(3, 64));
  }

  PropagateOptions options() const {
    PropagateOptions o;
    o.grid_w = grid;
    o.grid_h = grid;
    o.embeddings = BaselineEmbeddingSource{embedding_dim, weights_from(weights)};
    o.similarity = {temperature, normalize_columns};
    return o;
  }
};

struct ColorizeCommand {
  std::string input, edits, output, report, embeddings;
  double beta = 0.0;
  double ridge = 0.0;
  bool force_lu = false;
  EmbeddingFlags emb;

  void add(Params& p) {
    p.option("input", input, "grayscale or color image (PNG or PPM)")->required();
    p.option("edits", edits, "edits JSON file")->required();
    p.option("output", output, "output PNG")->required();
    p.option("report", report, "solve report JSON (default: <output>.report.json)");
    p.option("beta", beta, "constraint strength; overrides the edits file (default 5)");
    p.option("ridge", ridge, "ridge added to the system matrix")->check(CLI::NonNegativeNumber);
    p.flag("force-lu", force_lu, "skip the Cholesky attempt");
    p.option("embeddings", embeddings, "GCRFEMB1 embeddings file replacing the baseline features");
    emb.add(p);
  }

  int run(Params& p, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const GrayImage gray = to_gray(read_image(input));
    bool has_beta = false;
    EditSet set = parse_edits_json(read_text_file(edits), &has_beta);
    const bool beta_flag = p.app()->get_option("--beta")->count() > 0;
    if (beta_flag) {
      if (!(beta > 0.0)) throw Error(ErrorKind::kBadInput, "beta must be > 0");
      set.beta = beta;
    } else if (!has_beta) {
      set.beta = kTestBeta;
    }
    beta = set.beta;

    PropagateOptions opts = emb.options();
    opts.assemble = {ridge, force_lu};
    if (!embeddings.empty()) opts.embeddings = load_embeddings(embeddings);
    const PropagateResult r = propagate(gray, set, opts);
    write_image(output, r.image);

    if (report.empty()) report = sibling(output, ".report.json").string();
    Json j;
    j["residual"] = r.report.residual;
    j["constraints"] = r.report.constraints;
    j["beta"] = r.report.beta;
    j["factorization"] = r.report.factorization == Factorization::kCholesky ? "cholesky" : "lu";
    j["clamped_pixels"] = r.clamped_pixels;
    j["grid_w"] = opts.grid_w;
    j["grid_h"] = opts.grid_h;
    j["wall_ms"] = elapsed_ms(start);
    write_json(report, j);
    write_json(sibling(output, ".config.json"), p.resolved());
    out << j.dump() << "\n";
    return 0;
  }
};

struct GradcheckCommand {
  GradcheckConfig cfg;
  std::string output;
  bool inject = false;

  void add(Params& p) {
    p.option("seed", cfg.seed, "random seed");
    p.option("instances", cfg.instances, "random systems to check")->check(CLI::PositiveNumber);
    p.option("min-pixels", cfg.min_pixels, "smallest system size")->check(CLI::PositiveNumber);
    p.option("max-pixels", cfg.max_pixels, "largest system size")->check(CLI::PositiveNumber);
    p.option("min-dim", cfg.min_dim, "smallest embedding dimension")->check(CLI::PositiveNumber);
    p.option("max-dim", cfg.max_dim, "largest embedding dimension")->check(CLI::PositiveNumber);
    p.option("step", cfg.step, "central-difference step")->check(CLI::PositiveNumber);
    p.option("output", output, "also write the table to this file");
    p.app()->add_flag("--inject-hoc-sign-flip", inject)->group("");
  }

  int run(Params& p, std::ostream& out) {
    set_hoc_sign_flip_for_testing(inject);
    GradcheckReport report;
    try {
      report = run_gradcheck(cfg);
    } catch (...) {
      set_hoc_sign_flip_for_testing(false);
      throw;
    }
    set_hoc_sign_flip_for_testing(false);
    const std::string table = format_gradcheck(report);
    out << table;
    if (!output.empty()) {
      write_text_file(output, table);
      write_json(sibling(output, ".config.json"), p.resolved());
    }
    if (!report.pass()) throw Error(ErrorKind::kGradcheckBreach, "gradient check exceeded tolerance");
    return 0;
  }
};

struct TrainCommand {
  TrainConfig cfg;
  std::string output;
  std::vector<std::string> images;
  int count = 64;
  int size = 16;
  std::uint64_t data_seed = 11;
  std::vector<double> weights{4.0, 1.0, 1.0, 1.0, 1.0};
  std::string schedule = "0:1,2:0.75,4:0.5,6:0.25,8:0.1";

  void add(Params& p) {
    p.option("output", output, "checkpoint path")->required();
    p.option("images", images, "color training images (default: synthetic two-mode set)");
    p.option("count", count, "synthetic image count")->check(CLI::PositiveNumber);
    p.option("size", size, "training resolution (size x size)")->check(CLI::Range(4, 128));
    p.option("data-seed", data_seed, "synthetic data seed");
    p.option("latent-dim", cfg.dims.latent_dim, "latent dimension")->check(CLI::PositiveNumber);
    p.option("embedding-dim", cfg.dims.embedding_dim, "structure embedding dimension")->check(CLI::PositiveNumber);
    p.option("temperature", cfg.dims.temperature, "softmax temperature")->check(CLI::PositiveNumber);
    p.option("weights", weights, "initial structure weights")->expected(kBaselineFeatureCount)->delimiter(',');
    p.option("components", cfg.components, "mixture components M")->check(CLI::PositiveNumber);
    p.option("sigma", cfg.sigma, "mixture component scale")->check(CLI::PositiveNumber);
    p.option("kl-weight", cfg.kl_weight, "KL weight in the stage-1 loss")->check(CLI::NonNegativeNumber);
    p.option("beta", cfg.beta, "G-CRF beta during training")->check(CLI::PositiveNumber);
    p.option("batch-size", cfg.batch_size, "images per step")->check(CLI::PositiveNumber);
    p.option("epochs-unary", cfg.epochs_unary, "unary-phase epochs")->check(CLI::NonNegativeNumber);
    p.option("epochs-hoc", cfg.epochs_hoc, "HOC-phase epochs")->check(CLI::NonNegativeNumber);
    p.option("lr-unary", cfg.lr_unary, "unary-phase learning rate")->check(CLI::NonNegativeNumber);
    p.option("lr-hoc", cfg.lr_hoc, "HOC-phase learning rate")->check(CLI::NonNegativeNumber);
    p.option("momentum", cfg.momentum, "gradient momentum")->check(CLI::Range(0.0, 1.0));
    p.option("schedule", schedule, "mask schedule epoch:fraction,...");
    p.option("latent-samples", cfg.latent_samples, "posterior draws per image for stage 2")
        ->check(CLI::PositiveNumber);
    p.option("stage2-epochs", cfg.stage2.epochs, "mixture fitting epochs")->check(CLI::NonNegativeNumber);
    p.option("lr-means", cfg.stage2.lr_means, "mixture mean learning rate")->check(CLI::NonNegativeNumber);
    p.option("lr-weights", cfg.stage2.lr_weights, "mixture weight learning rate")->check(CLI::NonNegativeNumber);
    p.option("seed", cfg.seed, "training seed");
  }

  int run(Params& p, std::ostream& out) {
    cfg.structure = weights_from(weights);
    cfg.schedule = parse_schedule(schedule);
    std::vector<TrainingExample> data;
    if (images.empty()) {
      for (const auto& s : two_mode_dataset(count, size, data_seed)) data.push_back(make_example(s.gray, s.chroma, s.mode));
    } else {
      for (const auto& path : images) {
        GrayImage g;
        ColorFieldLab c;
        split_lab(read_image(path), g, c);
        data.push_back(make_example(resample(g, size, size), resample(c, size, size)));
      }
    }
    Json log = Json::array();
    const TrainedModel model = train(data, cfg, [&](const EpochLog& e) {
      Json row;
      row["phase"] = e.phase == Phase::kUnary ? "unary" : "hoc";
      row["epoch"] = e.epoch;
      row["fraction"] = e.fraction;
      row["loss"] = e.loss;
      out << row.dump() << "\n";
      log.push_back(std::move(row));
    });
    save_checkpoint(output, model);
    write_json(sibling(output, ".log.json"), log);
    write_json(sibling(output, ".config.json"), p.resolved());
    return 0;
  }
};

struct SampleCommand {
  std::string model, input, output_dir;
  int n = 8;
  int grid = kDefaultGrid;
  std::string mode = "per-component";
  double noise_scale = 1.0;
  double beta = kTestBeta;
  double fraction = 1.0;
  std::uint64_t seed = 1;

  void add(Params& p) {
    p.option("model", model, "checkpoint")->required();
    p.option("input", input, "grayscale or color image")->required();
    p.option("output-dir", output_dir, "directory for sample PNGs and the diversity report")->required();
    p.option("n", n, "number of samples")->check(CLI::PositiveNumber);
    p.option("grid", grid, "sampling grid size")->check(CLI::Range(8, 256));
    p.option("mode", mode, "per-component or weighted")->check(CLI::IsMember({"per-component", "weighted"}));
    p.option("noise-scale", noise_scale, "multiplies the component sigma")->check(CLI::NonNegativeNumber);
    p.option("beta", beta, "G-CRF beta")->check(CLI::PositiveNumber);
    p.option("fraction", fraction, "share of decoded unaries kept")->check(CLI::Range(0.0, 1.0));
    p.option("seed", seed, "sampling seed");
  }

  int run(Params& p, std::ostream& out) {
    const TrainedModel m = load_checkpoint(model);
    const GrayImage native = to_gray(read_image(input));
    const GrayImage g = resample(native, grid, grid);
    SampleOptions opts;
    opts.mode = mode == "weighted" ? SampleMode::kWeighted : SampleMode::kPerComponent;
    opts.noise_scale = noise_scale;
    opts.beta = beta;
    opts.fraction = fraction;
    Rng rng(seed);
    const SampleResult r = sample_diverse(m, g, n, opts, rng);

    fs::create_directories(output_dir);
    Json report;
    report["n"] = n;
    Json components = Json::array();
    for (int k = 0; k < n; ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "sample_%02d.png", k);
      const ColorFieldLab chroma = resample(r.samples[k], native.width, native.height);
      write_image(fs::path(output_dir) / name, compose_rgb(native, chroma, nullptr));
      components.push_back(r.latents[k].component);
    }
    report["components"] = components;
    report["factorizations"] = r.factorizations;
    if (n >= 2) {
      const Diversity d = diversity(r.samples);
      report["variance"] = d.variance;
      report["mean_pairwise_ssim"] = d.mean_pairwise_ssim;
    } else {
      report["variance"] = nullptr;
      report["mean_pairwise_ssim"] = nullptr;
    }
    write_json(fs::path(output_dir) / "diversity.json", report);
    write_json(fs::path(output_dir) / "config.json", p.resolved());
    out << report.dump() << "\n";
    return 0;
  }
};

struct EvalCommand {
  std::vector<std::string> images;
  std::string output;
  int count = 20;
  int size = 32;
  std::uint64_t data_seed = 1000;
  std::vector<int> points{10, 50, 100};
  int patch = 7;
  int seeds = 3;
  std::uint64_t seed = 1;
  std::string mode = "center";
  double beta = kTestBeta;
  EmbeddingFlags emb;

  EvalCommand() {
    emb.temperature = 0.1;
    emb.normalize_columns = true;
    emb.weights = {4.0, 2.0, 2.0, 0.0, 0.0};
  }

  void add(Params& p) {
    p.option("output", output, "metrics report JSON")->required();
    p.option("images", images, "color ground-truth images (default: synthetic region images)");
    p.option("count", count, "synthetic image count")->check(CLI::PositiveNumber);
    p.option("size", size, "synthetic image size")->check(CLI::Range(4, 512));
    p.option("data-seed", data_seed, "synthetic data seed");
    p.option("points", points, "revealed point counts")->delimiter(',');
    p.option("patch", patch, "revealed patch size (odd)")->check(CLI::PositiveNumber);
    p.option("seeds", seeds, "reveal draws per image and point count")->check(CLI::PositiveNumber);
    p.option("seed", seed, "reveal seed");
    p.option("mode", mode, "center (one constraint per point) or full (whole patch)")
        ->check(CLI::IsMember({"center", "full"}));
    p.option("beta", beta, "constraint strength")->check(CLI::PositiveNumber);
    emb.add(p);
  }

  int run(Params& p, std::ostream& out) {
    std::vector<EvalImage> data;
    if (images.empty()) {
      data = synthetic_eval_images(count, size, data_seed);
    } else {
      for (const auto& path : images) {
        EvalImage e;
        split_lab(read_image(path), e.gray, e.chroma);
        data.push_back(std::move(e));
      }
    }
    ControllabilityConfig cfg;
    cfg.points = points;
    cfg.patch = patch;
    cfg.seeds = seeds;
    cfg.seed = seed;
    cfg.mode = mode == "full" ? PatchMode::kFullPatch : PatchMode::kCenterMean;
    cfg.beta = beta;
    cfg.propagate = emb.options();
    const ControllabilityReport r = run_controllability(data, cfg);

    Json report;
    report["images"] = data.size();
    Json rows = Json::array();
    bool nondecreasing = true;
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
      const auto& row = r.rows[i];
      Json j;
      j["points"] = row.points;
      j["mean_psnr"] = row.mean_psnr;
      j["solved"] = row.solved;
      j["singular"] = row.singular;
      rows.push_back(j);
      if (i > 0 && row.mean_psnr < r.rows[i - 1].mean_psnr) nondecreasing = false;
    }
    report["rows"] = rows;
    report["nondecreasing"] = nondecreasing;
    write_json(output, report);
    write_json(sibling(output, ".config.json"), p.resolved());
    out << report.dump() << "\n";
    return 0;
  }
};

struct ServeCommand {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string model;
  std::string static_dir;
  int max_sessions = 32;
  std::uint64_t seed = 1;
  EmbeddingFlags emb;

  void add(Params& p) {
    p.option("host", host, "bind address");
    p.option("port", port, "port (0 picks a free one)")->envname("GCRF_PORT")->check(CLI::Range(0, 65535));
    p.option("model", model, "checkpoint enabling /diverse")->envname("GCRF_MODEL");
    p.option("static-dir", static_dir, "directory served at /");
    p.option("max-sessions", max_sessions, "sessions kept before LRU eviction")->check(CLI::PositiveNumber);
    p.option("seed", seed, "session id and sampling seed");
    emb.add(p);
  }

  int run(Params&, std::ostream& out) {
    ServiceConfig cfg;
    cfg.propagate = emb.options();
    cfg.max_sessions = static_cast<std::size_t>(max_sessions);
    cfg.seed = seed;
    if (!model.empty()) cfg.model = std::make_shared<const TrainedModel>(load_checkpoint(model));
    Service service(cfg);
    auto server = make_http_server(service, {static_dir, "*"});
    const int bound = port == 0 ? server->bind_to_any_port(host) : (server->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
    out << "listening on http://" << host << ":" << bound << std::endl;
    server->listen_after_bind();
    return 0;
  }
};

void report_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << error_json(kind, message) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-CRF colorization"};
  app.require_subcommand(1);

  ColorizeCommand colorize;
  GradcheckCommand gradcheck;
  TrainCommand train_cmd;
  SampleCommand sample;
  EvalCommand eval;
  ServeCommand serve;

  std::vector<std::pair<std::unique_ptr<Params>, std::function<int(Params&)>>> commands;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    auto params = std::make_unique<Params>(app.add_subcommand(name, help));
    cmd.add(*params);
    commands.emplace_back(std::move(params), [&cmd, &out](Params& p) { return cmd.run(p, out); });
  };
  add("colorize", "propagate sparse color edits over a grayscale image", colorize);
  add("gradcheck", "finite-difference check of the backward pass", gradcheck);
  add("train", "train the two-stage model", train_cmd);
  add("sample", "draw diverse colorizations from a checkpoint", sample);
  add("eval", "revealed-patch controllability sweep", eval);
  add("serve", "run the HTTP service", serve);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
      report_error(err, error_kind_name(ErrorKind::kBadInput), e.what());
      return exit_code_for(ErrorKind::kBadInput);
    }
    for (auto& [params, run] : commands) {
      if (!params->app()->parsed()) continue;
      params->apply_config();
      return run(*params);
    }
    return exit_code_for(ErrorKind::kBadInput);
  } catch (const Error& e) {
    report_error(err, error_kind_name(e.kind()), e.what());
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    report_error(err, error_kind_name(ErrorKind::kIo), e.what());
    return exit_code_for(ErrorKind::kIo);
  } catch (const nlohmann::json::exception& e) {
    report_error(err, error_kind_name(ErrorKind::kBadInput), e.what());
    return exit_code_for(ErrorKind::kBadInput);
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
}

}  // namespace gcrf
