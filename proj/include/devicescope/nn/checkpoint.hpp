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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "devicescope/nn/resnet.hpp"

namespace devicescope::nn {

inline constexpr std::array<char, 4> kCheckpointMagic = {'D', 'S', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;
/// Bumped whenever the input convention (sampling, standardization) changes.
inline constexpr int kDataSchemaVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoints are stored little-endian");

// Layout: magic | u32 format version | u64 header bytes | JSON header | f64 payload.
// The header lists every tensor (name, element count) in payload order.
inline void save_checkpoint(std::ostream& out, const ResNetModel& model) {
  ResNetModel m = model;
  auto params = parameters(m);
  auto bufs = buffers(m);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto* group : {&params, &bufs}) {
    for (const auto& p : *group) tensors.push_back({{"name", p.name}, {"size", p.values.size()}});
  }
  const nlohmann::json header = {
      {"format", "devicescope-resnet"},
      {"data_schema_version", kDataSchemaVersion},
      {"architecture",
       {{"kernel_size", m.config.kernel_size},
        {"filters", m.config.filters},
        {"convs_per_block", m.config.convs_per_block},
        {"input_channels", m.config.input_channels},
        {"classes", kNumClasses}}},
      {"init_seed", m.init_seed},
      {"train_seed", m.train_seed},
      {"trained", m.trained},
      {"tensors", tensors}};
  const std::string text = header.dump();
  const std::uint32_t version = kCheckpointFormatVersion;
  const std::uint64_t size = text.size();
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&size), sizeof size);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* group : {&params, &bufs}) {
    for (const auto& p : *group) {
      out.write(reinterpret_cast<const char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(double)));
    }
  }
  require(static_cast<bool>(out), ErrorCode::kIoError, "checkpoint write failed");
}

inline ResNetModel load_checkpoint(std::istream& in, const std::string& source = "<stream>") {
  auto fail = [&](ErrorCode code, const std::string& what) { throw Error(code, source + ": " + what); };
  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t size = 0;
  in.read(magic.data(), magic.size());
  if (!in || magic != kCheckpointMagic) fail(ErrorCode::kIoError, "not a checkpoint file");
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in) fail(ErrorCode::kIoError, "truncated checkpoint");
  if (version != kCheckpointFormatVersion) {
    fail(ErrorCode::kVersionMismatch, "checkpoint format " + std::to_string(version) + ", expected " +
                                          std::to_string(kCheckpointFormatVersion));
  }
  in.read(reinterpret_cast<char*>(&size), sizeof size);
  if (!in || size > (1u << 26)) fail(ErrorCode::kIoError, "bad checkpoint header");
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  if (!in) fail(ErrorCode::kIoError, "truncated checkpoint header");

  nlohmann::json header;
  ResNetConfig config;
  ResNetModel model;
  try {
    header = nlohmann::json::parse(text);
    const int schema = header.at("data_schema_version").get<int>();
    if (schema != kDataSchemaVersion) {
      fail(ErrorCode::kVersionMismatch, "data schema " + std::to_string(schema) + ", expected " +
                                            std::to_string(kDataSchemaVersion));
    }
    const auto& arch = header.at("architecture");
    config.kernel_size = arch.at("kernel_size").get<std::size_t>();
    config.filters = arch.at("filters").get<std::vector<std::size_t>>();
    config.convs_per_block = arch.at("convs_per_block").get<std::size_t>();
    config.input_channels = arch.at("input_channels").get<std::size_t>();
    if (arch.at("classes").get<std::size_t>() != kNumClasses) fail(ErrorCode::kShapeMismatch, "class count");
    model = ResNetModel::zeros(config);
    model.init_seed = header.at("init_seed").get<std::uint64_t>();
    model.train_seed = header.at("train_seed").get<std::uint64_t>();
    model.trained = header.at("trained").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIoError, std::string("bad checkpoint header: ") + e.what());
  }

  auto params = parameters(model);
  auto bufs = buffers(model);
  const auto& tensors = header.at("tensors");
  std::size_t idx = 0;
  for (auto* group : {&params, &bufs}) {
    for (auto& p : *group) {
      if (idx >= tensors.size() || tensors[idx].at("name").get<std::string>() != p.name ||
          tensors[idx].at("size").get<std::size_t>() != p.values.size()) {
        fail(ErrorCode::kShapeMismatch, "tensor table does not match architecture at '" + p.name + "'");
      }
      in.read(reinterpret_cast<char*>(p.values.data()), static_cast<std::streamsize>(p.values.size() * sizeof(double)));
      if (!in) fail(ErrorCode::kIoError, "truncated payload at '" + p.name + "'");
      ++idx;
    }
  }
  if (idx != tensors.size()) fail(ErrorCode::kShapeMismatch, "extra tensors in checkpoint");
  return model;
}

inline void save_checkpoint(const std::filesystem::path& path, const ResNetModel& model) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  save_checkpoint(out, model);
}

inline ResNetModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path.string());
  return load_checkpoint(in, path.string());
}

}  // namespace devicescope::nn
