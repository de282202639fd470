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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "devicescope/common.hpp"
#include "devicescope/data/types.hpp"

namespace devicescope::service {

inline const std::vector<std::size_t> kWindowLengthOptions = {360, 720, 1440};

/// Server configuration. Relative paths resolve against `data_root`.
struct AppConfig {
  std::filesystem::path data_root = ".";
  std::vector<std::filesystem::path> manifests;
  std::map<data::Appliance, std::filesystem::path> bundles;
  std::filesystem::path benchmark_dir = "benchmarks";
  std::filesystem::path static_dir;  // optional UI build to serve at /
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::size_t> window_lengths = kWindowLengthOptions;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : data_root / p;
  }

  /// Checks ranges and that every referenced path exists.
  void validate() const {
    require(port >= 1 && port <= 65535, ErrorCode::kInvalidConfig, "port " + std::to_string(port) + " out of range");
    require(!window_lengths.empty(), ErrorCode::kInvalidConfig, "no window lengths configured");
    for (std::size_t T : window_lengths) {
      require(std::find(kWindowLengthOptions.begin(), kWindowLengthOptions.end(), T) != kWindowLengthOptions.end(),
              ErrorCode::kInvalidConfig, "unsupported window length " + std::to_string(T));
    }
    require(std::filesystem::is_directory(data_root), ErrorCode::kInvalidConfig,
            "data root " + data_root.string() + " does not exist");
    for (const auto& m : manifests) {
      require(std::filesystem::exists(resolve(m)), ErrorCode::kInvalidConfig,
              "manifest " + resolve(m).string() + " does not exist");
    }
    for (const auto& [kind, b] : bundles) {
      require(std::filesystem::exists(resolve(b)), ErrorCode::kInvalidConfig,
              std::string(data::appliance_name(kind)) + " bundle " + resolve(b).string() + " does not exist");
    }
    if (!static_dir.empty()) {
      require(std::filesystem::is_directory(resolve(static_dir)), ErrorCode::kInvalidConfig,
              "static dir " + resolve(static_dir).string() + " does not exist");
    }
  }
};

/// `base_dir` anchors a relative data_root (normally the config file's directory).
inline AppConfig parse_app_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  AppConfig c;
  try {
    if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
    if (c.data_root.is_relative()) c.data_root = base_dir / c.data_root;
    const auto manifests = j.value("manifests", nlohmann::json::array());
    for (const auto& m : manifests) c.manifests.emplace_back(m.get<std::string>());
    const auto bundles = j.value("bundles", nlohmann::json::object());
    for (const auto& [name, path] : bundles.items()) {
      const auto kind = data::parse_appliance(name);
      require(kind.has_value(), ErrorCode::kInvalidConfig, "unknown appliance '" + name + "' in bundles");
      c.bundles[*kind] = path.get<std::string>();
    }
    if (j.contains("benchmark_dir")) c.benchmark_dir = j.at("benchmark_dir").get<std::string>();
    if (j.contains("static_dir")) c.static_dir = j.at("static_dir").get<std::string>();
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("window_lengths")) c.window_lengths = j.at("window_lengths").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("config: ") + e.what());
  }
  return c;
}

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

inline std::optional<std::string> process_env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr) return std::nullopt;
  return std::string(v);
}

/// DEVICESCOPE_PORT and DEVICESCOPE_DATA_ROOT take precedence over the file.
inline void apply_env_overrides(AppConfig& c, const EnvLookup& env = process_env) {
  if (auto port = env("DEVICESCOPE_PORT")) {
    try {
      std::size_t used = 0;
      c.port = std::stoi(*port, &used);
      require(used == port->size(), ErrorCode::kInvalidConfig, "");
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidConfig, "DEVICESCOPE_PORT is not an integer: '" + *port + "'");
    }
  }
  if (auto root = env("DEVICESCOPE_DATA_ROOT")) c.data_root = *root;
}

inline AppConfig load_app_config(const std::filesystem::path& path, const EnvLookup& env = process_env) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  AppConfig c = parse_app_config(j, path.parent_path());
  apply_env_overrides(c, env);
  return c;
}

inline nlohmann::json to_json(const AppConfig& c) {
  nlohmann::json bundles = nlohmann::json::object();
  for (const auto& [kind, p] : c.bundles) bundles[std::string(data::appliance_name(kind))] = p.string();
  nlohmann::json manifests = nlohmann::json::array();
  for (const auto& m : c.manifests) manifests.push_back(m.string());
  nlohmann::json j = {{"data_root", c.data_root.string()}, {"manifests", manifests},
                      {"bundles", bundles},                {"benchmark_dir", c.benchmark_dir.string()},
                      {"host", c.host},                    {"port", c.port},
                      {"window_lengths", c.window_lengths}};
  if (!c.static_dir.empty()) j["static_dir"] = c.static_dir.string();
  return j;
}

}  // namespace devicescope::service
