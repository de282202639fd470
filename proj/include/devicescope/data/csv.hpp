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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "devicescope/common.hpp"
#include "devicescope/data/types.hpp"

namespace devicescope::data {

/// Maps CSV header names onto series fields. Appliance columns left out of
/// `appliance_columns` are discovered from their canonical names.
struct CsvSchema {
  std::string timestamp_column = "timestamp";
  std::string aggregate_column = "aggregate";
  std::map<Appliance, std::string> appliance_columns;
  bool discover_appliances = true;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

}  // namespace detail

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff](Z|±HH:MM)" into epoch seconds.
/// Fractional seconds are truncated.
inline std::optional<std::int64_t> parse_rfc3339(std::string_view s) {
  using namespace std::chrono;
  if (s.size() < 19) return std::nullopt;
  auto num = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
    return detail::parse_number<int>(s.substr(pos, len));
  };
  if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') ||
      s[13] != ':' || s[16] != ':') {
    return std::nullopt;
  }
  auto y = num(0, 4), mo = num(5, 2), d = num(8, 2), h = num(11, 2), mi = num(14, 2),
       sec = num(17, 2);
  if (!y || !mo || !d || !h || !mi || !sec) return std::nullopt;
  year_month_day ymd{year{*y}, month{static_cast<unsigned>(*mo)}, day{static_cast<unsigned>(*d)}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *sec > 60) return std::nullopt;

  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  }
  std::int64_t offset = 0;
  std::string_view zone = s.substr(pos);
  if (zone == "Z" || zone == "z") {
    offset = 0;
  } else if (zone.size() == 6 && (zone[0] == '+' || zone[0] == '-') && zone[3] == ':') {
    auto oh = detail::parse_number<int>(zone.substr(1, 2));
    auto om = detail::parse_number<int>(zone.substr(4, 2));
    if (!oh || !om) return std::nullopt;
    offset = (static_cast<std::int64_t>(*oh) * 3600 + *om * 60) * (zone[0] == '-' ? -1 : 1);
  } else {
    return std::nullopt;
  }
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return days * 86400 + *h * 3600 + *mi * 60 + *sec - offset;
}

inline std::string format_rfc3339(std::int64_t epoch_seconds) {
  using namespace std::chrono;
  const std::int64_t days = (epoch_seconds >= 0 ? epoch_seconds : epoch_seconds - 86399) / 86400;
  const std::int64_t rem = epoch_seconds - days * 86400;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

/// Most frequent positive spacing between consecutive timestamps.
inline std::int64_t infer_sample_period(const std::vector<std::int64_t>& timestamps) {
  std::map<std::int64_t, std::size_t> counts;
  for (std::size_t i = 1; i < timestamps.size(); ++i) ++counts[timestamps[i] - timestamps[i - 1]];
  std::int64_t best = 60;
  std::size_t best_count = 0;
  for (const auto& [gap, n] : counts) {
    if (n > best_count) {
      best = gap;
      best_count = n;
    }
  }
  return best;
}

/// Inserts explicit missing slots wherever consecutive timestamps are an
/// exact multiple (>= 2) of the sample period apart. Other gaps are kept.
inline PowerSeries fill_gaps(const PowerSeries& series) {
  PowerSeries out;
  out.house_id = series.house_id;
  out.sample_period = series.sample_period;
  for (const auto& [kind, _] : series.appliances) out.appliances[kind];
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (i > 0) {
      const std::int64_t gap = series.timestamps[i] - series.timestamps[i - 1];
      if (gap > series.sample_period && gap % series.sample_period == 0) {
        for (std::int64_t ts = series.timestamps[i - 1] + series.sample_period;
             ts < series.timestamps[i]; ts += series.sample_period) {
          out.timestamps.push_back(ts);
          out.aggregate.push_back(kMissing);
          for (auto& [kind, channel] : out.appliances) channel.push_back(kMissing);
        }
      }
    }
    out.timestamps.push_back(series.timestamps[i]);
    out.aggregate.push_back(series.aggregate[i]);
    for (auto& [kind, channel] : out.appliances) channel.push_back(series.appliances.at(kind)[i]);
  }
  return out;
}

/// Parses a wide CSV stream. `source` only labels error messages.
inline PowerSeries parse_csv(std::istream& in, const CsvSchema& schema = {},
                             std::string house_id = {}, const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](ErrorCode code, const std::string& what) {
    throw Error(code, source + ":" + std::to_string(line_no) + ": " + what);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::trim(line).empty()) break;
  }
  if (detail::trim(line).empty()) fail(ErrorCode::kMalformedRow, "missing header");

  const auto header = detail::split(line);
  auto column_of = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  };
  const auto ts_col = column_of(schema.timestamp_column);
  const auto agg_col = column_of(schema.aggregate_column);
  if (!ts_col) fail(ErrorCode::kMalformedRow, "no timestamp column '" + schema.timestamp_column + "'");
  if (!agg_col) fail(ErrorCode::kMalformedRow, "no aggregate column '" + schema.aggregate_column + "'");

  std::map<Appliance, std::size_t> appliance_cols;
  for (const auto& [kind, name] : schema.appliance_columns) {
    auto col = column_of(name);
    if (!col) fail(ErrorCode::kMalformedRow, "no appliance column '" + name + "'");
    appliance_cols[kind] = *col;
  }
  if (schema.discover_appliances) {
    for (Appliance kind : kAllAppliances) {
      if (appliance_cols.count(kind)) continue;
      if (auto col = column_of(appliance_name(kind))) appliance_cols[kind] = *col;
    }
  }

  PowerSeries series;
  series.house_id = std::move(house_id);
  for (const auto& [kind, _] : appliance_cols) series.appliances[kind];

  auto parse_power = [&](std::string_view field, std::string_view column) {
    if (field.empty() || field == "nan" || field == "NaN" || field == "NA") return kMissing;
    auto v = detail::parse_number<double>(field);
    if (!v || !std::isfinite(*v)) {
      fail(ErrorCode::kMalformedRow, "bad number '" + std::string(field) + "' in column '" +
                                         std::string(column) + "'");
    }
    if (*v < 0.0) fail(ErrorCode::kMalformedRow, "negative power in column '" + std::string(column) + "'");
    return *v;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::kMalformedRow, "expected " + std::to_string(header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    }
    std::optional<std::int64_t> ts = detail::parse_number<std::int64_t>(fields[*ts_col]);
    if (!ts) ts = parse_rfc3339(fields[*ts_col]);
    if (!ts) fail(ErrorCode::kMalformedRow, "bad timestamp '" + std::string(fields[*ts_col]) + "'");
    if (!series.timestamps.empty()) {
      if (*ts == series.timestamps.back()) {
        fail(ErrorCode::kDuplicateTimestamp, "duplicate timestamp " + std::to_string(*ts));
      }
      if (*ts < series.timestamps.back()) {
        fail(ErrorCode::kNonMonotonicTimestamp, "timestamp " + std::to_string(*ts) + " goes backwards");
      }
    }
    series.timestamps.push_back(*ts);
    series.aggregate.push_back(parse_power(fields[*agg_col], schema.aggregate_column));
    for (const auto& [kind, col] : appliance_cols) {
      series.appliances[kind].push_back(parse_power(fields[col], header[col]));
    }
  }

  series.sample_period = infer_sample_period(series.timestamps);
  return fill_gaps(series);
}

inline PowerSeries load_csv(const std::filesystem::path& path, const CsvSchema& schema = {},
                            std::optional<std::string> house_id = std::nullopt) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path.string());
  return parse_csv(in, schema, house_id.value_or(path.stem().string()), path.string());
}

namespace detail {

inline void append_number(std::string& out, double v) {
  if (is_missing(v)) return;
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

}  // namespace detail

/// Writes the wide format with epoch-second timestamps; missing readings
/// become empty fields. Values use shortest round-trip formatting.
inline void write_csv(std::ostream& out, const PowerSeries& series) {
  std::string buf = "timestamp,aggregate";
  for (const auto& [kind, _] : series.appliances) {
    buf += ',';
    buf += appliance_name(kind);
  }
  buf += '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    buf += std::to_string(series.timestamps[i]);
    buf += ',';
    detail::append_number(buf, series.aggregate[i]);
    for (const auto& [kind, channel] : series.appliances) {
      buf += ',';
      detail::append_number(buf, channel[i]);
    }
    buf += '\n';
    if (buf.size() > (1u << 20)) {
      out << buf;
      buf.clear();
    }
  }
  out << buf;
}

/// Rounds every reading to `decimals` fractional digits (3: milliwatts).
inline void round_watts(PowerSeries& series, int decimals = 3) {
  const double scale = std::pow(10.0, decimals);
  auto apply = [&](std::vector<double>& v) {
    for (double& x : v) {
      if (!is_missing(x)) x = std::round(x * scale) / scale;
    }
  };
  apply(series.aggregate);
  for (auto& [_, channel] : series.appliances) apply(channel);
}

inline void write_csv(const std::filesystem::path& path, const PowerSeries& series) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  write_csv(out, series);
}

}  // namespace devicescope::data
