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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "devicescope/camal/bundle.hpp"
#include "devicescope/camal/pipeline.hpp"
#include "devicescope/common.hpp"
#include "devicescope/data/manifest.hpp"
#include "devicescope/eval/benchmark.hpp"
#include "devicescope/service/config.hpp"

namespace devicescope::service {

using Json = nlohmann::json;

struct Response {
  int status = 200;
  Json body;
};

inline Response error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

inline double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

inline Json watts_json(double v) { return is_missing(v) ? Json(nullptr) : Json(round_to(v, 3)); }
inline Json probability_json(double v) { return round_to(v, 6); }

struct Dataset {
  data::DatasetManifest manifest;
  std::map<std::string, data::PowerSeries> series;  // by house id
};

/// Everything the API reads. Built once and never mutated; reload swaps it.
struct Snapshot {
  AppConfig config;
  std::map<std::string, Dataset> datasets;
  std::map<data::Appliance, camal::CamalEnsemble> ensembles;
};

inline std::shared_ptr<const Snapshot> load_snapshot(const AppConfig& config) {
  config.validate();
  auto snap = std::make_shared<Snapshot>();
  snap->config = config;
  for (const auto& m : config.manifests) {
    Dataset d;
    d.manifest = data::load_manifest(config.resolve(m));
    for (const auto& h : d.manifest.houses) d.series.emplace(h.id, data::load_csv(d.manifest.resolve(h), {}, h.id));
    const std::string id = d.manifest.dataset_id;
    require(!snap->datasets.contains(id), ErrorCode::kInvalidConfig, "dataset '" + id + "' listed twice");
    snap->datasets.emplace(id, std::move(d));
  }
  for (const auto& [kind, path] : config.bundles) {
    auto ens = camal::load_bundle(config.resolve(path));
    require(ens.appliance == kind, ErrorCode::kInvalidConfig,
            "bundle " + path.string() + " is for " + std::string(data::appliance_name(ens.appliance)));
    snap->ensembles.emplace(kind, std::move(ens));
  }
  return snap;
}

struct WindowQuery {
  std::string dataset_id;
  std::string house_id;
  std::size_t offset = 0;
  std::size_t length = 0;
};

/// Request handlers as pure functions of (snapshot, request). Transport
/// glue lives in server.hpp.
class Api {
 public:
  explicit Api(std::shared_ptr<const Snapshot> snapshot) : snapshot_(std::move(snapshot)) {}

  std::shared_ptr<const Snapshot> snapshot() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
  }

  /// Rebuilds from the current config and swaps atomically; in-flight
  /// requests keep the snapshot they started with.
  Response reload() {
    try {
      auto fresh = load_snapshot(snapshot()->config);
      std::lock_guard lock(mutex_);
      snapshot_ = std::move(fresh);
    } catch (const Error& e) {
      return error_response(500, to_string(e.code()), e.what());
    }
    return {200, {{"status", "reloaded"}}};
  }

  Response datasets() const {
    const auto snap = snapshot();
    Json list = Json::array();
    for (const auto& [id, d] : snap->datasets) {
      list.push_back({{"id", id}, {"sample_period", d.manifest.sample_period}, {"houses", d.manifest.houses.size()}});
    }
    Json appliances = Json::array();
    for (const auto& [kind, ens] : snap->ensembles) {
      appliances.push_back({{"appliance", data::appliance_name(kind)}, {"window_length", ens.window_length}});
    }
    return {200,
            {{"datasets", list}, {"window_lengths", snap->config.window_lengths}, {"appliances", appliances}}};
  }

  Response houses(const std::string& dataset_id) const {
    const auto snap = snapshot();
    const auto it = snap->datasets.find(dataset_id);
    if (it == snap->datasets.end()) return error_response(404, "not_found", "unknown dataset '" + dataset_id + "'");
    Json list = Json::array();
    for (const auto& h : it->second.manifest.houses) {
      const auto& s = it->second.series.at(h.id);
      Json channels = Json::array();
      for (const auto& [kind, _] : s.appliances) channels.push_back(data::appliance_name(kind));
      list.push_back({{"id", h.id},
                      {"role", data::role_name(h.role)},
                      {"total_length", s.size()},
                      {"start_timestamp", s.timestamps.empty() ? 0 : s.timestamps.front()},
                      {"appliances", channels}});
    }
    return {200, {{"dataset", dataset_id}, {"houses", list}}};
  }

  /// Query-string form: dataset, house, offset (default 0), length.
  Response window(const std::map<std::string, std::string>& params) const {
    const auto snap = snapshot();
    WindowQuery q;
    if (auto bad = parse_query(*snap, params, q)) return *bad;
    return window(*snap, q);
  }

  Response window(const WindowQuery& q) const {
    const auto snap = snapshot();
    return window(*snap, q);
  }

  /// Body: {dataset, house, offset, length, appliances: [...]}.
  Response predict(const Json& body) const {
    const auto snap = snapshot();
    if (!body.is_object()) return error_response(400, "invalid_argument", "request body must be a JSON object");
    std::map<std::string, std::string> params;
    for (const char* key : {"dataset", "house", "offset", "length"}) {
      if (!body.contains(key)) continue;
      const auto& v = body.at(key);
      if (v.is_string()) {
        params[key] = v.get<std::string>();
      } else if (v.is_number_integer()) {
        params[key] = std::to_string(v.get<long long>());
      } else {
        return error_response(400, "invalid_argument", std::string("field '") + key + "' has the wrong type");
      }
    }
    WindowQuery q;
    if (auto bad = parse_query(*snap, params, q)) return *bad;
    if (auto bad = check_range(*snap, q)) return *bad;

    const Json requested = body.value("appliances", Json::array());
    if (!requested.is_array()) return error_response(400, "invalid_argument", "'appliances' must be a list");
    std::vector<data::Appliance> kinds;
    for (const auto& a : requested) {
      const auto kind = a.is_string() ? data::parse_appliance(a.get<std::string>()) : std::nullopt;
      if (!kind || !snap->ensembles.contains(*kind)) {
        return error_response(404, "not_found", "no model for appliance " + a.dump());
      }
      const auto& ens = snap->ensembles.at(*kind);
      if (ens.window_length != q.length) {
        return error_response(409, "length_mismatch",
                              std::string(data::appliance_name(*kind)) + " model expects windows of " +
                                  std::to_string(ens.window_length) + " steps, got " + std::to_string(q.length));
      }
      kinds.push_back(*kind);
    }

    const auto& series = snap->datasets.at(q.dataset_id).series.at(q.house_id);
    data::Window w;
    w.house_id = q.house_id;
    w.start_index = q.offset;
    w.start_timestamp = series.timestamps[q.offset];
    w.values.assign(series.aggregate.begin() + static_cast<std::ptrdiff_t>(q.offset),
                    series.aggregate.begin() + static_cast<std::ptrdiff_t>(q.offset + q.length));
    for (double v : w.values) {
      if (is_missing(v)) return error_response(422, "missing_data", "window contains missing readings");
    }

    Json predictions = Json::object();
    for (data::Appliance kind : kinds) {
      const auto r = camal::localize_window(snap->ensembles.at(kind), w);
      Json per_model = Json::array();
      for (double p : r.detection.per_model_probs) per_model.push_back(probability_json(p));
      Json cam = Json::array(), scores = Json::array();
      for (double v : r.status.cam_avg) cam.push_back(probability_json(v));
      for (double v : r.status.s) scores.push_back(probability_json(v));
      predictions[std::string(data::appliance_name(kind))] = {
          {"prob_ensemble", probability_json(r.detection.prob_ensemble)},
          {"per_model_probs", per_model},
          {"detected", r.detection.detected},
          {"detection_threshold", snap->ensembles.at(kind).detection_threshold},
          {"y_hat", r.status.y_hat},
          {"s", scores},
          {"cam_avg", cam}};
    }
    return {200,
            {{"dataset", q.dataset_id},
             {"house", q.house_id},
             {"offset", q.offset},
             {"length", q.length},
             {"predictions", predictions}}};
  }

  /// Query-string form: dataset (required), task, metric.
  Response benchmark(const std::map<std::string, std::string>& params) const {
    const auto snap = snapshot();
    const auto d = params.find("dataset");
    if (d == params.end() || d->second.empty()) {
      return error_response(400, "invalid_argument", "missing 'dataset' parameter");
    }
    if (!snap->datasets.contains(d->second)) {
      return error_response(404, "not_found", "unknown dataset '" + d->second + "'");
    }
    std::optional<eval::Task> task;
    if (auto t = params.find("task"); t != params.end() && !t->second.empty()) {
      task = eval::parse_task(t->second);
      if (!task) return error_response(400, "invalid_argument", "task must be 'detection' or 'localization'");
    }
    const auto m = params.find("metric");
    const std::string metric = m == params.end() ? "" : m->second;
    const eval::BenchmarkStore store(
        eval::BenchmarkStore::path_for(snap->config.resolve(snap->config.benchmark_dir), d->second));
    Json rows = Json::array();
    try {
      for (const auto& r : store.query(task, metric)) rows.push_back(eval::to_json(r));
    } catch (const Error& e) {
      return error_response(500, to_string(e.code()), e.what());
    }
    return {200, {{"dataset", d->second}, {"rows", rows}}};
  }

 private:
  static std::optional<Response> parse_query(const Snapshot& snap, const std::map<std::string, std::string>& params,
                                             WindowQuery& q) {
    auto get = [&](const char* key) -> std::optional<std::string> {
      auto it = params.find(key);
      if (it == params.end() || it->second.empty()) return std::nullopt;
      return it->second;
    };
    auto number = [](const std::string& s) -> std::optional<long long> {
      long long v = 0;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
      return v;
    };
    const auto dataset = get("dataset"), house = get("house"), length = get("length");
    if (!dataset || !house || !length) {
      return error_response(400, "invalid_argument", "dataset, house and length are required");
    }
    q.dataset_id = *dataset;
    q.house_id = *house;
    const auto len = number(*length);
    if (!len || std::find(snap.config.window_lengths.begin(), snap.config.window_lengths.end(),
                          static_cast<std::size_t>(std::max(0LL, *len))) == snap.config.window_lengths.end()) {
      return error_response(400, "invalid_argument", "length must be one of the configured window lengths");
    }
    q.length = static_cast<std::size_t>(*len);
    if (const auto off = get("offset")) {
      const auto v = number(*off);
      if (!v) return error_response(400, "invalid_argument", "offset must be an integer");
      if (*v < 0) return error_response(416, "out_of_range", "offset must be non-negative");
      q.offset = static_cast<std::size_t>(*v);
    }
    return std::nullopt;
  }

  static std::optional<Response> check_range(const Snapshot& snap, const WindowQuery& q) {
    const auto d = snap.datasets.find(q.dataset_id);
    if (d == snap.datasets.end()) return error_response(404, "not_found", "unknown dataset '" + q.dataset_id + "'");
    const auto h = d->second.series.find(q.house_id);
    if (h == d->second.series.end()) return error_response(404, "not_found", "unknown house '" + q.house_id + "'");
    const std::size_t total = h->second.size();
    if (q.offset >= total || q.length > total - q.offset) {
      return error_response(416, "out_of_range",
                            "window [" + std::to_string(q.offset) + ", " + std::to_string(q.offset + q.length) +
                                ") exceeds series length " + std::to_string(total));
    }
    return std::nullopt;
  }

  static Response window(const Snapshot& snap, const WindowQuery& q) {
    if (auto bad = check_range(snap, q)) return *bad;
    const auto& s = snap.datasets.at(q.dataset_id).series.at(q.house_id);
    const std::size_t total = s.size();
    Json ts = Json::array(), agg = Json::array();
    for (std::size_t t = q.offset; t < q.offset + q.length; ++t) {
      ts.push_back(s.timestamps[t]);
      agg.push_back(watts_json(s.aggregate[t]));
    }
    Json channels = Json::object();
    for (const auto& [kind, ch] : s.appliances) {
      Json v = Json::array();
      for (std::size_t t = q.offset; t < q.offset + q.length; ++t) v.push_back(watts_json(ch[t]));
      channels[std::string(data::appliance_name(kind))] = std::move(v);
    }
    return {200,
            {{"dataset", q.dataset_id},
             {"house", q.house_id},
             {"offset", q.offset},
             {"length", q.length},
             {"total_length", total},
             {"sample_period", s.sample_period},
             {"has_prev", q.offset >= q.length},
             {"has_next", q.offset + 2 * q.length <= total},
             {"timestamps", ts},
             {"aggregate", agg},
             {"appliances", channels}}};
  }

  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace devicescope::service
