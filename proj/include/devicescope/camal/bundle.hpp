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

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "devicescope/camal/pipeline.hpp"
#include "devicescope/nn/checkpoint.hpp"

namespace devicescope::camal {

inline constexpr int kBundleSchemaVersion = 1;

inline nlohmann::json fingerprint_json(const TrainingFingerprint& f) {
  return {{"dataset", f.dataset_id}, {"train_houses", f.train_houses}, {"windows", f.windows},
          {"positives", f.positives}, {"labels_used", f.labels_used},  {"digest", f.digest}};
}

inline TrainingFingerprint parse_fingerprint(const nlohmann::json& j) {
  TrainingFingerprint f;
  f.dataset_id = j.value("dataset", std::string());
  f.train_houses = j.value("train_houses", std::vector<std::string>{});
  f.windows = j.value("windows", std::size_t{0});
  f.positives = j.value("positives", std::size_t{0});
  f.labels_used = j.value("labels_used", std::size_t{0});
  f.digest = j.value("digest", std::string());
  return f;
}

/// Writes one checkpoint per member plus `bundle.json` into `dir`.
/// Returns the manifest path.
inline std::filesystem::path save_bundle(const CamalEnsemble& ens, const std::filesystem::path& dir) {
  ens.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < ens.models.size(); ++i) {
    const std::string file = "member" + std::to_string(i) + "_k" + std::to_string(ens.models[i].config.kernel_size) + ".ckpt";
    nn::save_checkpoint(dir / file, ens.models[i]);
    members.push_back({{"file", file}, {"kernel_size", ens.models[i].config.kernel_size}});
  }
  const nlohmann::json manifest = {{"schema_version", kBundleSchemaVersion},
                                   {"appliance", data::appliance_name(ens.appliance)},
                                   {"window_length", ens.window_length},
                                   {"detection_threshold", ens.detection_threshold},
                                   {"status_threshold", ens.localization.status_threshold},
                                   {"input_transform", transform_name(ens.localization.transform)},
                                   {"members", members},
                                   {"fingerprint", fingerprint_json(ens.fingerprint)}};
  const auto path = dir / "bundle.json";
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  out << manifest.dump(2) << '\n';
  return path;
}

/// Accepts either the bundle directory or its `bundle.json`.
inline CamalEnsemble load_bundle(std::filesystem::path path) {
  if (std::filesystem::is_directory(path)) path /= "bundle.json";
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open bundle " + path.string());
  CamalEnsemble ens;
  try {
    nlohmann::json j;
    in >> j;
    const int version = j.at("schema_version").get<int>();
    require(version == kBundleSchemaVersion, ErrorCode::kVersionMismatch,
            "bundle schema " + std::to_string(version) + ", expected " + std::to_string(kBundleSchemaVersion));
    const auto kind = data::parse_appliance(j.at("appliance").get<std::string>());
    require(kind.has_value(), ErrorCode::kInvalidConfig, "unknown appliance in bundle");
    ens.appliance = *kind;
    ens.window_length = j.at("window_length").get<std::size_t>();
    ens.detection_threshold = j.at("detection_threshold").get<double>();
    ens.localization.status_threshold = j.at("status_threshold").get<double>();
    const std::string transform = j.at("input_transform").get<std::string>();
    require(transform == "zscore" || transform == "raw", ErrorCode::kInvalidConfig,
            "unknown input transform '" + transform + "'");
    ens.localization.transform = transform == "zscore" ? InputTransform::kZScore : InputTransform::kRaw;
    for (const auto& m : j.at("members")) {
      ens.models.push_back(nn::load_checkpoint(path.parent_path() / m.at("file").get<std::string>()));
    }
    ens.fingerprint = parse_fingerprint(j.at("fingerprint"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  ens.validate();
  return ens;
}

}  // namespace devicescope::camal
