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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "devicescope/common.hpp"
#include "devicescope/data/types.hpp"

namespace devicescope::data {

/// Parameters of the synthetic household generator.
struct SynthConfig {
  std::size_t houses = 8;
  std::size_t days = 30;
  std::int64_t sample_period = 60;
  std::int64_t start_timestamp = 1704067200;  // 2024-01-01T00:00:00Z
  std::map<Appliance, double> rates_per_day = {{Appliance::kKettle, 2.0},
                                               {Appliance::kDishwasher, 0.6}};
  double base_load = 150.0;         // watts, house mean before diurnal swing
  double base_load_spread = 0.3;    // relative house-to-house variation
  double diurnal_amplitude = 0.25;  // relative
  double fridge_power = 90.0;
  double fridge_on_minutes = 15.0;
  double fridge_off_minutes = 30.0;
  double noise = 8.0;  // scale of the half-normal noise, watts
  std::string house_prefix = "house_";

  void validate() const {
    require(houses >= 1, ErrorCode::kInvalidConfig, "need at least one house");
    require(days >= 1, ErrorCode::kInvalidConfig, "need at least one day");
    require(sample_period > 0 && sample_period <= 60, ErrorCode::kInvalidConfig,
            "sample_period must be in (0, 60] seconds");
    require(!rates_per_day.empty(), ErrorCode::kInvalidConfig, "appliance mix is empty");
    for (const auto& [kind, rate] : rates_per_day) {
      require(rate >= 0.0 && std::isfinite(rate), ErrorCode::kInvalidConfig,
              "negative injection rate for " + std::string(appliance_name(kind)));
    }
    require(base_load >= 0.0 && base_load_spread >= 0.0 && base_load_spread < 1.0, ErrorCode::kInvalidConfig,
            "bad base-load settings");
    require(diurnal_amplitude >= 0.0 && diurnal_amplitude < 1.0, ErrorCode::kInvalidConfig,
            "diurnal_amplitude must be in [0, 1)");
    require(fridge_power >= 0.0 && fridge_on_minutes > 0.0 && fridge_off_minutes > 0.0,
            ErrorCode::kInvalidConfig, "bad fridge settings");
    require(noise >= 0.0, ErrorCode::kInvalidConfig, "noise must be non-negative");
  }
};

namespace detail {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

/// Power profile of one appliance activation, one value per minute.
inline std::vector<double> signature_minutes(Appliance kind, Rng& rng) {
  auto rect = [&](double lo_w, double hi_w, int lo_min, int hi_min) {
    const double level = uniform(rng, lo_w, hi_w);
    const int minutes = uniform_int(rng, lo_min, hi_min);
    std::vector<double> p(static_cast<std::size_t>(minutes));
    for (double& v : p) v = level * uniform(rng, 0.98, 1.02);
    return p;
  };
  // Multi-phase cycle: low-power phases around two heating plateaus.
  auto cycle = [&](bool washing_machine) {
    const int total = uniform_int(rng, 60, 120);
    const double heat = uniform(rng, 1800.0, 2200.0);
    const std::vector<double> fractions =
        washing_machine ? std::vector<double>{0.05, 0.20, 0.40, 0.12, 0.23}
                        : std::vector<double>{0.10, 0.20, 0.30, 0.15, 0.25};
    std::vector<double> p;
    p.reserve(static_cast<std::size_t>(total));
    for (std::size_t phase = 0; phase < fractions.size(); ++phase) {
      const int minutes = phase + 1 == fractions.size()
                              ? total - static_cast<int>(p.size())
                              : std::max(1, static_cast<int>(std::lround(fractions[phase] * total)));
      for (int m = 0; m < minutes; ++m) {
        double v = 0.0;
        switch (phase) {
          case 0: v = uniform(rng, 60.0, 120.0); break;
          case 1: v = heat * uniform(rng, 0.98, 1.02); break;
          case 2: v = washing_machine ? (m % 2 == 0 ? uniform(rng, 250.0, 500.0) : uniform(rng, 80.0, 150.0))
                                      : uniform(rng, 100.0, 200.0);
            break;
          case 3: v = heat * uniform(rng, 0.98, 1.02); break;
          default: v = washing_machine ? uniform(rng, 300.0, 600.0) : uniform(rng, 40.0, 80.0); break;
        }
        p.push_back(v);
      }
    }
    return p;
  };
  switch (kind) {
    case Appliance::kKettle: return rect(1800.0, 2500.0, 2, 5);
    case Appliance::kMicrowave: return rect(800.0, 1200.0, 1, 5);
    case Appliance::kShower: return rect(7000.0, 9000.0, 4, 10);
    case Appliance::kDishwasher: return cycle(false);
    case Appliance::kWashingMachine: return cycle(true);
  }
  return {};
}

inline std::vector<double> expand_to_steps(const std::vector<double>& per_minute, std::int64_t period) {
  const auto per = static_cast<std::size_t>(60 / period);
  std::vector<double> out;
  out.reserve(per_minute.size() * per);
  for (double v : per_minute) out.insert(out.end(), per, v);
  return out;
}

}  // namespace detail

/// Seeded synthetic households with exact per-appliance channels.
///
/// aggregate = base load (with diurnal swing) + fridge cycling + injected
/// appliance activations + half-normal noise; every term is non-negative.
inline std::vector<PowerSeries> synth_generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t steps_per_day = static_cast<std::size_t>(86400 / config.sample_period);
  const std::size_t n = config.days * steps_per_day;
  std::vector<PowerSeries> houses;
  houses.reserve(config.houses);

  for (std::size_t h = 0; h < config.houses; ++h) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(h)};
    detail::Rng rng(seq);

    PowerSeries s;
    char id[32];
    std::snprintf(id, sizeof id, "%02zu", h + 1);
    s.house_id = config.house_prefix + id;
    s.sample_period = config.sample_period;
    s.timestamps.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      s.timestamps[i] = config.start_timestamp + static_cast<std::int64_t>(i) * config.sample_period;
    }
    s.aggregate.assign(n, 0.0);

    const double level =
        config.base_load * detail::uniform(rng, 1.0 - config.base_load_spread, 1.0 + config.base_load_spread);
    const double phase = detail::uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
      const double day_frac = static_cast<double>(i % steps_per_day) / static_cast<double>(steps_per_day);
      s.aggregate[i] = level * (1.0 + config.diurnal_amplitude *
                                          std::sin(2.0 * std::numbers::pi * day_frac + phase));
    }

    // Fridge-like compressor cycling with jittered on/off durations.
    const double fridge = config.fridge_power * detail::uniform(rng, 0.85, 1.15);
    const double step_minutes = static_cast<double>(config.sample_period) / 60.0;
    double t = detail::uniform(rng, 0.0, config.fridge_off_minutes);
    while (t < static_cast<double>(n) * step_minutes) {
      const double on = config.fridge_on_minutes * detail::uniform(rng, 0.8, 1.2);
      const double power = fridge * detail::uniform(rng, 0.95, 1.05);
      const auto begin = static_cast<std::size_t>(t / step_minutes);
      const auto end = std::min(n, static_cast<std::size_t>((t + on) / step_minutes));
      for (std::size_t i = begin; i < end; ++i) s.aggregate[i] += power;
      t += on + config.fridge_off_minutes * detail::uniform(rng, 0.8, 1.2);
    }

    for (const auto& [kind, rate] : config.rates_per_day) {
      std::vector<double>& channel = s.appliances[kind];
      channel.assign(n, 0.0);
      const auto events =
          std::poisson_distribution<int>(rate * static_cast<double>(config.days))(rng);
      for (int e = 0; e < events; ++e) {
        const auto profile = detail::expand_to_steps(detail::signature_minutes(kind, rng), config.sample_period);
        if (profile.size() + 2 > n) continue;
        // Same-kind activations never touch, so runs in the channel are events.
        for (int attempt = 0; attempt < 50; ++attempt) {
          const auto start = static_cast<std::size_t>(
              std::uniform_int_distribution<std::size_t>(1, n - profile.size() - 1)(rng));
          bool clear = true;
          for (std::size_t i = start - 1; i < start + profile.size() + 1 && clear; ++i) clear = channel[i] == 0.0;
          if (!clear) continue;
          for (std::size_t i = 0; i < profile.size(); ++i) channel[start + i] = profile[i];
          break;
        }
      }
      for (std::size_t i = 0; i < n; ++i) s.aggregate[i] += channel[i];
    }

    if (config.noise > 0.0) {
      std::normal_distribution<double> noise(0.0, config.noise);
      for (double& v : s.aggregate) v += std::abs(noise(rng));
    }
    houses.push_back(std::move(s));
  }
  return houses;
}

}  // namespace devicescope::data
