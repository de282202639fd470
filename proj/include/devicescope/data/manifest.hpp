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
#include <vector>

#include <nlohmann/json.hpp>

#include "devicescope/common.hpp"
#include "devicescope/data/csv.hpp"
#include "devicescope/data/types.hpp"

namespace devicescope::data {

inline constexpr int kManifestSchemaVersion = 1;

enum class HouseRole { kTrain, kTest };

inline std::string_view role_name(HouseRole r) { return r == HouseRole::kTrain ? "train" : "test"; }

struct HouseEntry {
  std::string id;
  std::filesystem::path path;  // relative paths resolve against the manifest directory
  HouseRole role = HouseRole::kTrain;
};

/// One dataset: a list of house CSV files with their train/test role.
struct DatasetManifest {
  std::string dataset_id;
  std::int64_t sample_period = 60;
  std::vector<HouseEntry> houses;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const HouseEntry& h) const {
    return h.path.is_absolute() ? h.path : base_dir / h.path;
  }

  const HouseEntry* find(std::string_view house_id) const {
    for (const auto& h : houses) {
      if (h.id == house_id) return &h;
    }
    return nullptr;
  }

  std::vector<std::string> house_ids(HouseRole role) const {
    std::vector<std::string> out;
    for (const auto& h : houses) {
      if (h.role == role) out.push_back(h.id);
    }
    return out;
  }

  std::vector<PowerSeries> load(HouseRole role) const {
    std::vector<PowerSeries> out;
    for (const auto& h : houses) {
      if (h.role == role) out.push_back(load_csv(resolve(h), {}, h.id));
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json houses_json = nlohmann::json::array();
    for (const auto& h : houses) {
      houses_json.push_back({{"id", h.id}, {"path", h.path.generic_string()}, {"role", role_name(h.role)}});
    }
    return {{"schema_version", kManifestSchemaVersion},
            {"dataset", dataset_id},
            {"sample_period", sample_period},
            {"houses", houses_json}};
  }
};

inline DatasetManifest parse_manifest(const nlohmann::json& j, std::filesystem::path base_dir = {}) {
  try {
    const int version = j.at("schema_version").get<int>();
    require(version == kManifestSchemaVersion, ErrorCode::kVersionMismatch,
            "manifest schema " + std::to_string(version) + ", expected " +
                std::to_string(kManifestSchemaVersion));
    DatasetManifest m;
    m.dataset_id = j.at("dataset").get<std::string>();
    m.sample_period = j.value("sample_period", std::int64_t{60});
    m.base_dir = std::move(base_dir);
    for (const auto& h : j.at("houses")) {
      const std::string role = h.value("role", std::string("train"));
      require(role == "train" || role == "test", ErrorCode::kInvalidConfig, "unknown house role '" + role + "'");
      m.houses.push_back({h.at("id").get<std::string>(), h.at("path").get<std::string>(),
                          role == "train" ? HouseRole::kTrain : HouseRole::kTest});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("manifest: ") + e.what());
  }
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write manifest " + path.string());
  out << m.to_json().dump(2) << '\n';
}

}  // namespace devicescope::data
