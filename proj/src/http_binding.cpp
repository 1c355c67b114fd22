// SPDX-License-Identifier: Apache-2.0
#include "gcrf/http_binding.hpp"

#include "gcrf/error.hpp"
#include "httplib.h"

namespace gcrf {
namespace {

void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  for (const auto& [k, v] : r.headers) res.set_header(k, v);
  res.set_content(r.body, "application/json");
}

}  // namespace

std::unique_ptr<httplib::Server> make_http_server(Service& service, const HttpOptions& options) {
  auto server = std::make_unique<httplib::Server>();
  server->set_default_headers({
      {"Access-Control-Allow-Origin", options.cors_origin},
      {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
      {"Access-Control-Allow-Headers", "Content-Type"},
      {"Access-Control-Expose-Headers", "X-Cache, X-Solve-Ms"},
  });
  // One byte over the limit lets the handler answer 413 itself.
  server->set_payload_max_length(kMaxUploadBytes + 1);

  server->Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server->Post("/session", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.create_session(req.body));
  });
  server->Post("/session/:id/colorize", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.colorize(req.path_params.at("id"), req.body));
  });
  server->Post("/session/:id/diverse", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.diverse(req.path_params.at("id"), req.body));
  });
  server->Get("/session/:id/similarity_row", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.similarity_row(req.path_params.at("id"), req.get_param_value("p")));
  });
  server->Get("/stats", [&service](const httplib::Request&, httplib::Response& res) { send(res, service.stats()); });

  server->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 413) {
      res.set_content(error_json("too_large", "request body exceeds 8 MB"), "application/json");
    } else if (res.status == 404) {
      res.set_content(error_json("not_found", "no such route"), "application/json");
    }
  });
  server->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string message = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      message = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(error_json("internal", message), "application/json");
  });

  if (!options.static_dir.empty() && !server->set_mount_point("/", options.static_dir)) {
    throw Error(ErrorKind::kIo, "static directory not found: " + options.static_dir);
  }
  return server;
}

}  // namespace gcrf
