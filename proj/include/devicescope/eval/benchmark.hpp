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
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "devicescope/camal/pipeline.hpp"
#include "devicescope/common.hpp"
#include "devicescope/data/csv.hpp"
#include "devicescope/data/types.hpp"
#include "devicescope/data/windows.hpp"
#include "devicescope/eval/metrics.hpp"

namespace devicescope::eval {

inline constexpr int kBenchmarkSchemaVersion = 1;

enum class Task { kDetection, kLocalization };

inline std::string_view task_name(Task t) { return t == Task::kDetection ? "detection" : "localization"; }

inline std::optional<Task> parse_task(std::string_view s) {
  if (s == "detection") return Task::kDetection;
  if (s == "localization") return Task::kLocalization;
  return std::nullopt;
}

struct BenchmarkRecord {
  std::string dataset_id;
  data::Appliance appliance = data::Appliance::kKettle;
  std::string method_id;
  Task task = Task::kDetection;
  std::map<std::string, double> metrics;
  std::size_t labels_used = 0;
  std::size_t windows_evaluated = 0;
  std::string created_at;

  void validate() const {
    require(!dataset_id.empty() && !method_id.empty(), ErrorCode::kInvalidArgument,
            "benchmark record needs dataset and method ids");
    require(labels_used >= 1, ErrorCode::kInvalidArgument, "labels_used must be at least 1");
    for (const auto& [name, v] : metrics) {
      require(v >= 0.0 && v <= 1.0, ErrorCode::kInvalidArgument, "metric " + name + " outside [0, 1]");
    }
  }

  bool operator==(const BenchmarkRecord&) const = default;
};

inline nlohmann::json to_json(const BenchmarkRecord& r) {
  return {{"schema_version", kBenchmarkSchemaVersion},
          {"dataset_id", r.dataset_id},
          {"appliance", data::appliance_name(r.appliance)},
          {"method_id", r.method_id},
          {"task", task_name(r.task)},
          {"metrics", r.metrics},
          {"labels_used", r.labels_used},
          {"windows_evaluated", r.windows_evaluated},
          {"created_at", r.created_at}};
}

inline BenchmarkRecord record_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("schema_version").get<int>();
    require(version == kBenchmarkSchemaVersion, ErrorCode::kVersionMismatch,
            "benchmark row schema " + std::to_string(version));
    BenchmarkRecord r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    const auto kind = data::parse_appliance(j.at("appliance").get<std::string>());
    require(kind.has_value(), ErrorCode::kInvalidArgument, "unknown appliance in benchmark row");
    r.appliance = *kind;
    r.method_id = j.at("method_id").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    require(task.has_value(), ErrorCode::kInvalidArgument, "unknown task in benchmark row");
    r.task = *task;
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    r.labels_used = j.at("labels_used").get<std::size_t>();
    r.windows_evaluated = j.at("windows_evaluated").get<std::size_t>();
    r.created_at = j.at("created_at").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("benchmark row: ") + e.what());
  }
}

enum class Supervision { kWeak, kStrong };

/// Labels a training set consumes: one per window (weak) or one per
/// timestep (strong).
inline std::size_t label_accounting(std::span<const data::Window> windows, Supervision supervision) {
  require(!windows.empty(), ErrorCode::kEmptyInput, "no training windows");
  if (supervision == Supervision::kWeak) return windows.size();
  std::size_t n = 0;
  for (const auto& w : windows) n += w.length();
  return n;
}

/// What a method under evaluation reports for one window.
struct WindowPrediction {
  bool detected = false;
  std::vector<std::uint8_t> y_hat;
};

struct BenchmarkSetup {
  std::string dataset_id;
  std::string method_id = "camal";
  std::size_t window_length = 1440;
  std::size_t labels_used = 1;
  std::vector<std::string> train_houses;
  std::string created_at;  // empty: current UTC time
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  return data::format_rfc3339(std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
}

/// Scores `predict(window) -> WindowPrediction` on every complete
/// non-overlapping window of the test houses. Returns one detection and one
/// localization record.
template <typename Predictor>
std::vector<BenchmarkRecord> run_benchmark(Predictor&& predict, std::span<const data::PowerSeries> test_houses,
                                           data::Appliance kind, const BenchmarkSetup& setup) {
  require(!test_houses.empty(), ErrorCode::kEmptyInput, "no test houses");
  for (const auto& h : test_houses) {
    require(std::find(setup.train_houses.begin(), setup.train_houses.end(), h.house_id) == setup.train_houses.end(),
            ErrorCode::kHouseOverlap, "house " + h.house_id + " was used for training");
  }
  const auto spec = data::default_spec(kind);
  std::vector<std::uint8_t> det_pred, det_truth;
  std::vector<std::vector<std::uint8_t>> loc_pred, loc_truth;
  for (const auto& house : test_houses) {
    for (const auto& w : data::labeled_windows(house, spec, setup.window_length, setup.window_length)) {
      WindowPrediction p = predict(w);
      require(p.y_hat.size() == w.length(), ErrorCode::kShapeMismatch, "prediction length differs from window");
      det_pred.push_back(p.detected ? 1 : 0);
      det_truth.push_back(static_cast<std::uint8_t>(*w.weak_label));
      loc_pred.push_back(std::move(p.y_hat));
      loc_truth.push_back(*w.truth);
    }
  }
  require(!det_truth.empty(), ErrorCode::kEmptyInput, "test houses yield no complete windows");

  BenchmarkRecord base;
  base.dataset_id = setup.dataset_id;
  base.appliance = kind;
  base.method_id = setup.method_id;
  base.labels_used = setup.labels_used;
  base.windows_evaluated = det_truth.size();
  base.created_at = setup.created_at.empty() ? utc_now() : setup.created_at;

  BenchmarkRecord detection = base;
  detection.task = Task::kDetection;
  detection.metrics = detection_metrics(det_pred, det_truth).to_map();

  BenchmarkRecord localization = base;
  localization.task = Task::kLocalization;
  const auto loc = localization_metrics(loc_pred, loc_truth);
  localization.metrics = loc.pooled.to_map();
  localization.metrics["mean_iou"] = loc.mean_iou.value;
  if (!loc.mean_iou.defined) localization.metrics["mean_iou_undefined"] = 1.0;

  detection.validate();
  localization.validate();
  return {detection, localization};
}

/// CamAL ensemble on held-out houses; labels_used comes from the training
/// fingerprint, and any overlap with the training houses is an error.
inline std::vector<BenchmarkRecord> run_benchmark(const camal::CamalEnsemble& ens,
                                                  std::span<const data::PowerSeries> test_houses,
                                                  std::string created_at = "") {
  BenchmarkSetup setup;
  setup.dataset_id = ens.fingerprint.dataset_id;
  setup.window_length = ens.window_length;
  setup.labels_used = ens.fingerprint.labels_used;
  setup.train_houses = ens.fingerprint.train_houses;
  setup.created_at = std::move(created_at);
  auto predict = [&](const data::Window& w) {
    auto r = camal::localize_window(ens, w);
    return WindowPrediction{r.detection.detected, std::move(r.status.y_hat)};
  };
  return run_benchmark(predict, test_houses, ens.appliance, setup);
}

/// Append-only JSON-lines file of benchmark rows for one dataset.
class BenchmarkStore {
 public:
  explicit BenchmarkStore(std::filesystem::path path) : path_(std::move(path)) {}

  static std::filesystem::path path_for(const std::filesystem::path& dir, const std::string& dataset_id) {
    return dir / (dataset_id + ".benchmark.jsonl");
  }

  const std::filesystem::path& path() const { return path_; }

  void append(const BenchmarkRecord& record) {
    record.validate();
    std::lock_guard lock(mutex_);
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_, std::ios::app);
    require(static_cast<bool>(out), ErrorCode::kIoError, "cannot append to " + path_.string());
    out << to_json(record).dump() << '\n';
    require(static_cast<bool>(out), ErrorCode::kIoError, "write failed for " + path_.string());
  }

  void append(std::span<const BenchmarkRecord> records) {
    for (const auto& r : records) append(r);
  }

  /// Rows in file (append) order. A missing file is an empty store.
  std::vector<BenchmarkRecord> read_all() const {
    std::vector<BenchmarkRecord> rows;
    std::ifstream in(path_);
    if (!in) return rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (data::detail::trim(line).empty()) continue;
      try {
        rows.push_back(record_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    return rows;
  }

  /// Newest first, optionally restricted to a task and to rows carrying a
  /// given metric.
  std::vector<BenchmarkRecord> query(std::optional<Task> task = std::nullopt,
                                     const std::string& metric = "") const {
    auto rows = read_all();
    std::vector<BenchmarkRecord> out;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      if (task && it->task != *task) continue;
      if (!metric.empty() && !it->metrics.contains(metric)) continue;
      out.push_back(*it);
    }
    return out;
  }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

}  // namespace devicescope::eval
