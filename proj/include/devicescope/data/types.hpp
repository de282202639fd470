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
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "devicescope/common.hpp"

namespace devicescope::data {

enum class Appliance { kKettle, kMicrowave, kDishwasher, kWashingMachine, kShower };

inline constexpr std::array<Appliance, 5> kAllAppliances = {
    Appliance::kKettle, Appliance::kMicrowave, Appliance::kDishwasher,
    Appliance::kWashingMachine, Appliance::kShower};

inline std::string_view appliance_name(Appliance a) {
  switch (a) {
    case Appliance::kKettle: return "kettle";
    case Appliance::kMicrowave: return "microwave";
    case Appliance::kDishwasher: return "dishwasher";
    case Appliance::kWashingMachine: return "washing_machine";
    case Appliance::kShower: return "shower";
  }
  return "unknown";
}

inline std::optional<Appliance> parse_appliance(std::string_view name) {
  for (Appliance a : kAllAppliances) {
    if (appliance_name(a) == name) return a;
  }
  return std::nullopt;
}

/// Activity rule used to turn an appliance power channel into ON/OFF truth.
struct ApplianceSpec {
  Appliance kind = Appliance::kKettle;
  double on_power_threshold = 500.0;  // watts
  int min_on_duration = 1;            // minutes

  void validate() const {
    require(on_power_threshold > 0.0, ErrorCode::kInvalidConfig,
            "on_power_threshold must be positive");
    require(min_on_duration >= 1, ErrorCode::kInvalidConfig,
            "min_on_duration must be at least one minute");
  }
};

inline ApplianceSpec default_spec(Appliance a) {
  switch (a) {
    case Appliance::kKettle: return {a, 500.0, 1};
    case Appliance::kMicrowave: return {a, 200.0, 1};
    case Appliance::kShower: return {a, 1000.0, 5};
    case Appliance::kDishwasher: return {a, 20.0, 5};
    case Appliance::kWashingMachine: return {a, 20.0, 5};
  }
  return {a, 500.0, 1};
}

/// Aggregate (and optionally per-appliance) readings for one house.
///
/// Missing readings are stored as kMissing. After resampling the timestamps
/// sit on an exact `sample_period` grid.
struct PowerSeries {
  std::string house_id;
  std::int64_t sample_period = 60;
  std::vector<std::int64_t> timestamps;
  std::vector<double> aggregate;
  std::map<Appliance, std::vector<double>> appliances;

  std::size_t size() const noexcept { return timestamps.size(); }

  bool is_regular() const {
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      if (timestamps[i] - timestamps[i - 1] != sample_period) return false;
    }
    return true;
  }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (double v : aggregate) n += is_missing(v) ? 1 : 0;
    return n;
  }

  void validate() const {
    require(sample_period > 0, ErrorCode::kInvalidConfig, "sample_period must be positive");
    require(aggregate.size() == timestamps.size(), ErrorCode::kLengthMismatch,
            "aggregate length differs from timestamps");
    for (std::size_t i = 1; i < timestamps.size(); ++i) {
      require(timestamps[i] > timestamps[i - 1], ErrorCode::kNonMonotonicTimestamp,
              "timestamps must be strictly increasing");
    }
    for (const auto& [kind, channel] : appliances) {
      require(channel.size() == timestamps.size(), ErrorCode::kLengthMismatch,
              "appliance channel '" + std::string(appliance_name(kind)) +
                  "' differs in length from aggregate");
    }
  }
};

/// A fixed-length, gap-free slice of aggregate power.
struct Window {
  std::string house_id;
  std::size_t start_index = 0;
  std::int64_t start_timestamp = 0;
  std::vector<double> values;
  std::optional<int> weak_label;
  std::optional<std::vector<std::uint8_t>> truth;
  // Household-level possession flag, used when no per-timestep truth exists.
  std::optional<bool> possession;

  std::size_t length() const noexcept { return values.size(); }
};

}  // namespace devicescope::data
