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

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "devicescope/common.hpp"

namespace devicescope::eval {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
};

inline ConfusionCounts confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require(pred.size() == truth.size(), ErrorCode::kLengthMismatch,
          "prediction and truth lengths differ (" + std::to_string(pred.size()) + " vs " +
              std::to_string(truth.size()) + ")");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0;
    const bool t = truth[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

/// A ratio that may be undefined (zero denominator); undefined reads as 0.
struct Ratio {
  double value = 0.0;
  bool defined = false;
};

inline Ratio ratio(double num, double den) {
  if (den == 0.0) return {0.0, false};
  return {num / den, true};
}

struct MetricReport {
  ConfusionCounts counts;
  Ratio accuracy, precision, recall, f1, balanced_accuracy;

  /// Flat map with "<name>_undefined" flags for undefined ratios.
  std::map<std::string, double> to_map() const {
    std::map<std::string, double> m;
    auto put = [&](const char* name, const Ratio& r) {
      m[name] = r.value;
      if (!r.defined) m[std::string(name) + "_undefined"] = 1.0;
    };
    put("accuracy", accuracy);
    put("balanced_accuracy", balanced_accuracy);
    put("precision", precision);
    put("recall", recall);
    put("f1", f1);
    return m;
  }
};

/// Metrics from confusion counts. Balanced accuracy averages the recall of
/// every class present in the truth.
inline MetricReport metrics_from_counts(const ConfusionCounts& c) {
  MetricReport r;
  r.counts = c;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  r.accuracy = ratio(d(c.tp + c.tn), d(c.total()));
  r.precision = ratio(d(c.tp), d(c.tp + c.fp));
  r.recall = ratio(d(c.tp), d(c.tp + c.fn));
  r.f1 = ratio(2.0 * d(c.tp), d(2 * c.tp + c.fp + c.fn));
  const Ratio specificity = ratio(d(c.tn), d(c.tn + c.fp));
  if (r.recall.defined && specificity.defined) {
    r.balanced_accuracy = {(r.recall.value + specificity.value) / 2.0, true};
  } else if (r.recall.defined || specificity.defined) {
    r.balanced_accuracy = {r.recall.defined ? r.recall.value : specificity.value, true};
  }
  return r;
}

inline MetricReport detection_metrics(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  require(!pred.empty() || !truth.empty(), ErrorCode::kEmptyInput, "no items to score");
  auto c = confusion(pred, truth);
  require(c.total() > 0, ErrorCode::kEmptyInput, "no items to score");
  return metrics_from_counts(c);
}

struct LocalizationReport {
  MetricReport pooled;  // micro-averaged over every timestep of every window
  Ratio mean_iou;       // over windows whose predicted or true active set is non-empty
};

/// Intersection-over-union of the active timesteps of one window.
inline Ratio interval_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  const auto c = confusion(pred, truth);
  return ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
}

inline LocalizationReport localization_metrics(std::span<const std::vector<std::uint8_t>> y_hat,
                                               std::span<const std::vector<std::uint8_t>> y_true) {
  require(y_hat.size() == y_true.size(), ErrorCode::kShapeMismatch,
          "window counts differ (" + std::to_string(y_hat.size()) + " vs " + std::to_string(y_true.size()) + ")");
  require(!y_hat.empty(), ErrorCode::kEmptyInput, "no windows to score");
  ConfusionCounts total;
  double iou_sum = 0.0;
  std::size_t iou_n = 0;
  for (std::size_t w = 0; w < y_hat.size(); ++w) {
    require(y_hat[w].size() == y_true[w].size(), ErrorCode::kShapeMismatch,
            "window " + std::to_string(w) + " lengths differ");
    const auto c = confusion(y_hat[w], y_true[w]);
    total += c;
    const Ratio iou = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp + c.fn));
    if (iou.defined) {
      iou_sum += iou.value;
      ++iou_n;
    }
  }
  require(total.total() > 0, ErrorCode::kEmptyInput, "no timesteps to score");
  LocalizationReport r;
  r.pooled = metrics_from_counts(total);
  r.mean_iou = ratio(iou_sum, static_cast<double>(iou_n));
  return r;
}

}  // namespace devicescope::eval
