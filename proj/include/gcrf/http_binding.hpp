// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>

#include "gcrf/service.hpp"

namespace httplib {
class Server;
}

namespace gcrf {

struct HttpOptions {
  std::string static_dir;          ///< served at "/" when non-empty
  std::string cors_origin = "*";
};

/// Routes:
///   POST /session                       raw image bytes
///   POST /session/{id}/colorize         edits JSON
///   POST /session/{id}/diverse          {"n": k}
///   GET  /session/{id}/similarity_row?p=
///   GET  /stats
/// The service must outlive the server.
std::unique_ptr<httplib::Server> make_http_server(Service& service, const HttpOptions& options);

}  // namespace gcrf
