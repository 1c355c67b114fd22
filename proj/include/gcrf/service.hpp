// SPDX-License-Identifier: Apache-2.0
//
// HTTP-independent colorization service. Each handler maps a request body
// to a status code and a JSON body; http_binding.hpp wires them to routes.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "gcrf/edits.hpp"
#include "gcrf/pipeline.hpp"

namespace gcrf {

inline constexpr std::size_t kMaxUploadBytes = 8u << 20;
inline constexpr int kMaxDiverse = 8;

struct ServiceConfig {
  PropagateOptions propagate{};
  std::size_t max_sessions = 32;
  std::size_t max_cached_systems = 8;   ///< per session
  std::size_t max_cached_results = 64;  ///< per session
  std::uint64_t seed = 1;               ///< session ids and diverse draws
  std::shared_ptr<const TrainedModel> model;
  SampleOptions sample{};
};

struct Response {
  int status = 200;
  std::string body;  ///< JSON
  std::vector<std::pair<std::string, std::string>> headers;
};

class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();

  Response create_session(std::string_view image_bytes);
  Response colorize(const std::string& session_id, std::string_view edits_json);
  Response diverse(const std::string& session_id, std::string_view request_json);
  Response similarity_row(const std::string& session_id, std::string_view pixel);
  Response stats() const;

  const ServiceConfig& config() const { return config_; }
  std::size_t session_count() const;

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id);

  ServiceConfig config_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 0;
  std::uint64_t tick_ = 0;
  std::uint64_t evictions_ = 0;
};

/// {"error":kind,"message":..} with an optional "index".
std::string error_json(std::string_view kind, std::string_view message, std::optional<std::size_t> index = {});

}  // namespace gcrf
