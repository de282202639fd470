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
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "devicescope/common.hpp"
#include "devicescope/data/types.hpp"

namespace devicescope::data {

inline constexpr std::int64_t kDefaultSamplePeriod = 60;

/// Bucket-mean resampling onto an epoch-aligned grid of `period` seconds.
/// Buckets without any non-missing source reading are marked missing.
inline PowerSeries resample(const PowerSeries& series, std::int64_t period = kDefaultSamplePeriod) {
  require(period > 0, ErrorCode::kInvalidArgument, "period must be positive");
  if (period < series.sample_period) {
    throw Error(ErrorCode::kUpsamplingRequested,
                "target period " + std::to_string(period) + " s is finer than native " +
                    std::to_string(series.sample_period) + " s");
  }
  PowerSeries out;
  out.house_id = series.house_id;
  out.sample_period = period;
  for (const auto& [kind, _] : series.appliances) out.appliances[kind];
  if (series.size() == 0) return out;

  auto bucket_of = [period](std::int64_t ts) {
    std::int64_t b = ts / period;
    if (ts % period != 0 && ts < 0) --b;
    return b;
  };
  const std::int64_t first = bucket_of(series.timestamps.front());
  const std::int64_t last = bucket_of(series.timestamps.back());
  const auto n = static_cast<std::size_t>(last - first + 1);

  auto bucket_means = [&](const std::vector<double>& src) {
    std::vector<double> sum(n, 0.0);
    std::vector<std::size_t> count(n, 0);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (is_missing(src[i])) continue;
      const auto b = static_cast<std::size_t>(bucket_of(series.timestamps[i]) - first);
      sum[b] += src[i];
      ++count[b];
    }
    std::vector<double> mean(n, kMissing);
    for (std::size_t b = 0; b < n; ++b) {
      if (count[b] > 0) mean[b] = sum[b] / static_cast<double>(count[b]);
    }
    return mean;
  };

  out.timestamps.resize(n);
  for (std::size_t b = 0; b < n; ++b) out.timestamps[b] = (first + static_cast<std::int64_t>(b)) * period;
  out.aggregate = bucket_means(series.aggregate);
  for (const auto& [kind, channel] : series.appliances) out.appliances[kind] = bucket_means(channel);
  return out;
}

/// Complete (gap-free) windows of `length` steps taken every `stride` steps.
/// A stride of zero means non-overlapping windows (stride = length).
inline std::vector<Window> segment_windows(const PowerSeries& series, std::size_t length,
                                           std::size_t stride = 0) {
  require(length > 0, ErrorCode::kInvalidArgument, "window length must be positive");
  if (stride == 0) stride = length;
  std::vector<Window> windows;
  if (series.size() < length) return windows;

  // Prefix count of missing readings makes each completeness check O(1).
  std::vector<std::size_t> missing_before(series.size() + 1, 0);
  for (std::size_t i = 0; i < series.size(); ++i) {
    missing_before[i + 1] = missing_before[i] + (is_missing(series.aggregate[i]) ? 1 : 0);
  }
  for (std::size_t start = 0; start + length <= series.size(); start += stride) {
    if (missing_before[start + length] != missing_before[start]) continue;
    Window w;
    w.house_id = series.house_id;
    w.start_index = start;
    w.start_timestamp = series.timestamps[start];
    w.values.assign(series.aggregate.begin() + static_cast<std::ptrdiff_t>(start),
                    series.aggregate.begin() + static_cast<std::ptrdiff_t>(start + length));
    windows.push_back(std::move(w));
  }
  return windows;
}

/// Minimum run length in timesteps for `spec` at the given sampling period.
inline std::size_t min_run_steps(const ApplianceSpec& spec, std::int64_t sample_period) {
  const std::int64_t seconds = static_cast<std::int64_t>(spec.min_on_duration) * 60;
  return static_cast<std::size_t>(std::max<std::int64_t>(1, (seconds + sample_period - 1) / sample_period));
}

/// Per-timestep ON/OFF truth: power strictly above the threshold, with runs
/// shorter than the minimum duration removed.
inline std::vector<std::uint8_t> pointwise_truth(const Window& window, std::span<const double> channel,
                                                 const ApplianceSpec& spec,
                                                 std::int64_t sample_period = kDefaultSamplePeriod) {
  spec.validate();
  require(channel.size() == window.length(), ErrorCode::kLengthMismatch,
          "appliance channel has " + std::to_string(channel.size()) + " steps, window has " +
              std::to_string(window.length()));
  std::vector<std::uint8_t> truth(channel.size(), 0);
  for (std::size_t t = 0; t < channel.size(); ++t) {
    require(!is_missing(channel[t]), ErrorCode::kInvalidArgument, "appliance channel has missing readings");
    truth[t] = channel[t] > spec.on_power_threshold ? 1 : 0;
  }
  const std::size_t min_run = min_run_steps(spec, sample_period);
  std::size_t t = 0;
  while (t < truth.size()) {
    if (!truth[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < truth.size() && truth[end]) ++end;
    if (end - t < min_run) std::fill(truth.begin() + static_cast<std::ptrdiff_t>(t),
                                     truth.begin() + static_cast<std::ptrdiff_t>(end), 0);
    t = end;
  }
  return truth;
}

/// The single bit the trainer is allowed to see.
inline int assign_weak_label(const Window& window) {
  if (window.truth) {
    return std::any_of(window.truth->begin(), window.truth->end(), [](std::uint8_t v) { return v != 0; })
               ? 1
               : 0;
  }
  if (window.possession) return *window.possession ? 1 : 0;
  throw Error(ErrorCode::kNoGroundTruthAvailable,
              "window of house '" + window.house_id + "' has neither truth nor possession flag");
}

/// Segments a series and attaches truth plus weak label for one appliance.
/// Windows whose appliance channel has missing readings are dropped.
inline std::vector<Window> labeled_windows(const PowerSeries& series, const ApplianceSpec& spec,
                                           std::size_t length, std::size_t stride = 0) {
  auto it = series.appliances.find(spec.kind);
  require(it != series.appliances.end(), ErrorCode::kNoGroundTruthAvailable,
          "house '" + series.house_id + "' has no '" + std::string(appliance_name(spec.kind)) + "' channel");
  const std::vector<double>& channel = it->second;
  std::vector<Window> out;
  for (Window& w : segment_windows(series, length, stride)) {
    std::span<const double> slice(channel.data() + w.start_index, length);
    if (std::any_of(slice.begin(), slice.end(), [](double v) { return is_missing(v); })) continue;
    w.truth = pointwise_truth(w, slice, spec, series.sample_period);
    w.weak_label = assign_weak_label(w);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace devicescope::data
