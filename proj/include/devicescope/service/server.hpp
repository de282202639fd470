/*
 * Copyright 2026 The DeviceScope Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <map>
#include <memory>
#include <string>

// Eigen first: httplib pulls in <resolv.h>, whose `_res` macro breaks Eigen.
#include "devicescope/service/api.hpp"

#include <httplib.h>

namespace devicescope::service {

inline void send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

inline std::map<std::string, std::string> query_params(const httplib::Request& req) {
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : req.params) out[k] = v;
  return out;
}

/// Binds the API routes (and the optional static UI) onto `server`.
inline void install_routes(httplib::Server& server, Api& api) {
  server.Get("/api/datasets", [&api](const httplib::Request&, httplib::Response& res) { send(res, api.datasets()); });
  server.Get(R"(/api/datasets/([^/]+)/houses)", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.houses(req.matches[1]));
  });
  server.Get("/api/window", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.window(query_params(req)));
  });
  server.Post("/api/predict", [&api](const httplib::Request& req, httplib::Response& res) {
    const Json body = Json::parse(req.body, nullptr, false);
    if (body.is_discarded()) {
      send(res, error_response(400, "invalid_argument", "request body is not valid JSON"));
      return;
    }
    send(res, api.predict(body));
  });
  server.Get("/api/benchmark", [&api](const httplib::Request& req, httplib::Response& res) {
    send(res, api.benchmark(query_params(req)));
  });
  server.Post("/api/reload", [&api](const httplib::Request&, httplib::Response& res) { send(res, api.reload()); });

  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      send(res, error_response(500, to_string(e.code()), e.what()));
    } catch (const std::exception& e) {
      send(res, error_response(500, "internal", e.what()));
    }
  });
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && req.path.starts_with("/api/")) {
      send(res, error_response(404, "not_found", "no route for " + req.method + " " + req.path));
    }
  });

  const auto& cfg = api.snapshot()->config;
  if (!cfg.static_dir.empty()) server.set_mount_point("/", cfg.resolve(cfg.static_dir).string());
}

}  // namespace devicescope::service
