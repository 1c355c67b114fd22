// SPDX-License-Identifier: Apache-2.0
#include "gcrf/service.hpp"

#include <chrono>
#include <cstdio>
#include <limits>

#include "gcrf/color_io.hpp"
#include "gcrf/error.hpp"
#include "gcrf/metrics.hpp"
#include "httplib.h"
#include "json.hpp"

namespace gcrf {

using Json = nlohmann::ordered_json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string base64_png(const RgbImage& img) {
  const std::vector<std::uint8_t> png = encode_png(img);
  return httplib::detail::base64_encode(std::string(png.begin(), png.end()));
}

Response json_response(int status, const Json& body) { return {status, body.dump(), {}}; }

Response error_response(int status, const Error& e) {
  std::optional<std::size_t> index;
  if (const auto* oob = dynamic_cast<const OutOfBoundsError*>(&e)) index = oob->index();
  return {status, error_json(error_kind_name(e.kind()), e.what(), index), {}};
}

Response not_found(const std::string& id) {
  return {404, error_json("not_found", "unknown session '" + id + "'"), {}};
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kBadInput:
    case ErrorKind::kTooSmall:
    case ErrorKind::kNeedTwoSamples:
      return 400;
    case ErrorKind::kOutOfBounds:
      return 422;
    case ErrorKind::kSingularSystem:
      return 409;
    default:
      return 500;
  }
}

std::string system_key(const Constraints& c) {
  std::string key(c.mask.begin(), c.mask.end());
  char beta[32];
  std::snprintf(beta, sizeof beta, "|%.17g", c.beta);
  return key + beta;
}

}  // namespace

std::string error_json(std::string_view kind, std::string_view message, std::optional<std::size_t> index) {
  Json j;
  j["error"] = kind;
  j["message"] = message;
  if (index) j["index"] = *index;
  return j.dump();
}

struct Service::Session {
  std::string id;
  PreparedImage prepared;
  std::uint64_t last_used = 0;

  std::shared_mutex mutex;
  std::map<std::string, std::pair<std::shared_ptr<const GcrfSystem>, std::uint64_t>> systems;
  std::map<std::string, std::pair<std::string, std::uint64_t>> results;
  std::uint64_t uses = 0;
};

namespace {

template <typename Map>
void evict_oldest(Map& map, std::size_t limit) {
  while (map.size() > limit) {
    auto oldest = map.begin();
    for (auto it = map.begin(); it != map.end(); ++it) {
      if (it->second.second < oldest->second.second) oldest = it;
    }
    map.erase(oldest);
  }
}

}  // namespace

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.max_sessions < 1) throw Error(ErrorKind::kBadInput, "max_sessions must be >= 1");
  if (config_.propagate.grid_w < 1 || config_.propagate.grid_h < 1) {
    throw Error(ErrorKind::kBadInput, "grid dimensions must be >= 1");
  }
}

Service::~Service() = default;

std::size_t Service::session_count() const {
  std::shared_lock lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
  std::unique_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  it->second->last_used = ++tick_;
  return it->second;
}

Response Service::create_session(std::string_view image_bytes) {
  if (image_bytes.size() > kMaxUploadBytes) {
    return {413, error_json("too_large", "image exceeds 8 MB"), {}};
  }
  auto session = std::make_shared<Session>();
  try {
    const auto* data = reinterpret_cast<const std::uint8_t*>(image_bytes.data());
    const RgbImage rgb = decode_image({data, image_bytes.size()});
    session->prepared = prepare_image(to_gray(rgb), config_.propagate);
  } catch (const Error& e) {
    return error_response(400, e);
  }

  std::unique_lock lock(mutex_);
  char id[17];
  std::snprintf(id, sizeof id, "%016llx",
                static_cast<unsigned long long>(splitmix(config_.seed ^ splitmix(next_session_++))));
  session->id = id;
  session->last_used = ++tick_;
  sessions_[session->id] = session;
  while (sessions_.size() > config_.max_sessions) {
    auto oldest = sessions_.begin();
    for (auto it = sessions_.begin(); it != sessions_.end(); ++it) {
      if (it->second->last_used < oldest->second->last_used) oldest = it;
    }
    sessions_.erase(oldest);
    ++evictions_;
  }

  Json j;
  j["session_id"] = session->id;
  j["grid_w"] = config_.propagate.grid_w;
  j["grid_h"] = config_.propagate.grid_h;
  j["width"] = session->prepared.native.width;
  j["height"] = session->prepared.native.height;
  return json_response(200, j);
}

Response Service::colorize(const std::string& session_id, std::string_view edits_json) {
  const auto session = find(session_id);
  if (!session) return not_found(session_id);
  try {
    const EditSet edits = parse_edits_json(edits_json);
    if (edits.edits.empty()) {
      return {409, error_json("singular_system", "empty edit set: at least one edit is required"), {}};
    }
    const Constraints c = to_constraints(edits, config_.propagate.grid_w, config_.propagate.grid_h);
    const std::string result_key = edits_to_json(edits);
    const std::string sys_key = system_key(c);

    std::shared_ptr<const GcrfSystem> cached;
    {
      std::unique_lock lock(session->mutex);
      const std::uint64_t now = ++session->uses;
      if (auto it = session->results.find(result_key); it != session->results.end()) {
        it->second.second = now;
        return {200, it->second.first, {{"X-Cache", "hit"}, {"X-Solve-Ms", "0"}}};
      }
      if (auto it = session->systems.find(sys_key); it != session->systems.end()) {
        it->second.second = now;
        cached = it->second.first;
      }
    }

    const auto start = std::chrono::steady_clock::now();
    std::shared_ptr<const GcrfSystem> sys;
    if (cached) {
      sys = std::make_shared<const GcrfSystem>(cached->with_targets(c));
    } else {
      sys = std::make_shared<const GcrfSystem>(
          GcrfSystem::assemble_from(*session->prepared.smoothness, c, config_.propagate.assemble));
    }
    const PropagateResult result = finish_propagation(session->prepared, *sys);
    const double solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    Json j;
    j["image"] = base64_png(result.image);
    j["width"] = result.image.width;
    j["height"] = result.image.height;
    j["residual"] = result.report.residual;
    j["constraints"] = result.report.constraints;
    j["beta"] = result.report.beta;
    j["factorization"] = result.report.factorization == Factorization::kCholesky ? "cholesky" : "lu";
    j["clamped_pixels"] = result.clamped_pixels;
    std::string body = j.dump();

    {
      std::unique_lock lock(session->mutex);
      const std::uint64_t now = ++session->uses;
      if (!cached) {
        session->systems[sys_key] = {sys, now};
        evict_oldest(session->systems, config_.max_cached_systems);
      }
      session->results[result_key] = {body, now};
      evict_oldest(session->results, config_.max_cached_results);
    }
    char ms[32];
    std::snprintf(ms, sizeof ms, "%.3f", solve_ms);
    return {200, std::move(body), {{"X-Cache", "miss"}, {"X-Solve-Ms", ms}}};
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), e);
  }
}

Response Service::diverse(const std::string& session_id, std::string_view request_json) {
  const auto session = find(session_id);
  if (!session) return not_found(session_id);
  if (!config_.model) return {503, error_json("no_model", "no model checkpoint loaded"), {}};

  int n = 0;
  std::uint64_t seed = 0;
  try {
    const Json req = Json::parse(request_json);
    if (!req.is_object() || !req.contains("n") || !req["n"].is_number_integer()) {
      throw Error(ErrorKind::kBadInput, "request must be {\"n\": integer}");
    }
    for (const auto& [key, _] : req.items()) {
      if (key != "n" && key != "seed") throw Error(ErrorKind::kBadInput, "unknown key '" + key + "'");
    }
    n = req["n"].get<int>();
    if (req.contains("seed")) {
      if (!req["seed"].is_number_unsigned()) throw Error(ErrorKind::kBadInput, "seed must be a non-negative integer");
      seed = req["seed"].get<std::uint64_t>();
    }
  } catch (const Json::exception& e) {
    return {400, error_json("bad_input", e.what()), {}};
  } catch (const Error& e) {
    return error_response(400, e);
  }
  if (n < 1 || n > kMaxDiverse) return {400, error_json("bad_input", "n must lie in [1, 8]"), {}};

  try {
    const PreparedImage& prep = session->prepared;
    Rng rng(splitmix(config_.seed ^ splitmix(seed)));
    const SampleResult samples = sample_diverse(*config_.model, prep.grid, n, config_.sample, rng);

    Json j;
    j["n"] = n;
    Json images = Json::array();
    Json components = Json::array();
    for (int k = 0; k < n; ++k) {
      const ColorFieldLab native = resample(samples.samples[k], prep.native.width, prep.native.height);
      images.push_back(base64_png(compose_rgb(prep.native, native, nullptr)));
      components.push_back(samples.latents[k].component);
    }
    j["images"] = std::move(images);
    j["components"] = std::move(components);
    if (n >= 2) {
      const Diversity d = diversity(samples.samples);
      j["variance"] = d.variance;
      j["mean_pairwise_ssim"] = d.mean_pairwise_ssim;
    } else {
      j["variance"] = nullptr;
      j["mean_pairwise_ssim"] = nullptr;
    }
    return json_response(200, j);
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), e);
  }
}

Response Service::similarity_row(const std::string& session_id, std::string_view pixel) {
  const auto session = find(session_id);
  if (!session) return not_found(session_id);
  const Eigen::MatrixXd& s = session->prepared.similarity.rows;
  long long p = -1;
  std::size_t used = 0;
  try {
    p = std::stoll(std::string(pixel), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != pixel.size() || p < 0 || p >= s.rows()) {
    return {400, error_json("bad_input", "p must be a pixel index in [0, " + std::to_string(s.rows()) + ")"), {}};
  }
  Json j;
  j["p"] = p;
  j["grid_w"] = config_.propagate.grid_w;
  j["grid_h"] = config_.propagate.grid_h;
  Json row = Json::array();
  for (Eigen::Index k = 0; k < s.cols(); ++k) row.push_back(s(p, k));
  j["row"] = std::move(row);
  return json_response(200, j);
}

Response Service::stats() const {
  Json j;
  j["factorizations"] = factorization_count();
  {
    std::shared_lock lock(mutex_);
    j["sessions"] = sessions_.size();
    j["evictions"] = evictions_;
  }
  j["model_loaded"] = static_cast<bool>(config_.model);
  return json_response(200, j);
}

}  // namespace gcrf
