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
#include <span>
#include <string>
#include <vector>

#include "devicescope/data/types.hpp"
#include "devicescope/nn/resnet.hpp"
#include "devicescope/nn/standardize.hpp"

namespace devicescope::camal {

enum class InputTransform { kZScore, kRaw };

inline std::string_view transform_name(InputTransform t) { return t == InputTransform::kZScore ? "zscore" : "raw"; }

struct LocalizationConfig {
  InputTransform transform = InputTransform::kZScore;
  double status_threshold = 0.5;
};

struct TrainingFingerprint {
  std::string dataset_id;
  std::vector<std::string> train_houses;
  std::size_t windows = 0;
  std::size_t positives = 0;
  std::size_t labels_used = 0;
  std::string digest;
};

/// N trained detectors for one appliance plus the localization settings.
struct CamalEnsemble {
  data::Appliance appliance = data::Appliance::kKettle;
  std::size_t window_length = 1440;
  std::vector<nn::ResNetModel> models;
  double detection_threshold = 0.5;
  LocalizationConfig localization;
  TrainingFingerprint fingerprint;

  void validate() const {
    require(!models.empty(), ErrorCode::kInvalidConfig, "ensemble needs at least one model");
    require(window_length > 0, ErrorCode::kInvalidConfig, "window length must be positive");
    require(detection_threshold > 0.0 && detection_threshold < 1.0, ErrorCode::kInvalidConfig,
            "detection threshold must be in (0, 1)");
    require(localization.status_threshold > 0.0 && localization.status_threshold < 1.0,
            ErrorCode::kInvalidConfig, "status threshold must be in (0, 1)");
  }
};

struct DetectionResult {
  double prob_ensemble = 0.0;
  std::vector<double> per_model_probs;
  bool detected = false;
};

struct StatusSeries {
  std::vector<double> s;
  std::vector<std::uint8_t> y_hat;
  std::vector<double> cam_avg;

  static StatusSeries zeros(std::size_t length) {
    return {std::vector<double>(length, 0.0), std::vector<std::uint8_t>(length, 0), std::vector<double>(length, 0.0)};
  }
};

struct Localization {
  DetectionResult detection;
  StatusSeries status;
};

/// Strict comparison: a probability equal to the threshold is not a detection.
inline bool detect(double prob_ensemble, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, ErrorCode::kInvalidArgument, "threshold must be in (0, 1)");
  return prob_ensemble > threshold;
}

inline bool detect(const DetectionResult& r, double threshold) { return detect(r.prob_ensemble, threshold); }

inline double mean_probability(std::span<const double> probs) {
  require(!probs.empty(), ErrorCode::kEmptyInput, "no model probabilities");
  double sum = 0.0;
  for (double p : probs) sum += p;
  return sum / static_cast<double>(probs.size());
}

/// CAM_c(t) = sum_k w[c][k] * f_k(t); the head bias is not part of the map.
inline std::vector<double> class_activation_map(const nn::Tensor& feature_maps, const nn::Matrix& head_weight,
                                                std::size_t class_index) {
  require(class_index < static_cast<std::size_t>(head_weight.rows()), ErrorCode::kInvalidArgument,
          "class index out of range");
  require(feature_maps.channels() == static_cast<std::size_t>(head_weight.cols()), ErrorCode::kShapeMismatch,
          "feature map count differs from head width");
  const nn::Vector cam = feature_maps.matrix().transpose() * head_weight.row(static_cast<Eigen::Index>(class_index)).transpose();
  return {cam.data(), cam.data() + cam.size()};
}

inline nn::Tensor model_input(std::span<const double> values) {
  return nn::Tensor::from_series(nn::standardize(values));
}

inline std::vector<double> cam_extract(const nn::ResNetModel& model, const data::Window& window,
                                       std::size_t class_index) {
  require(window.length() > 0, ErrorCode::kLengthMismatch, "empty window");
  const auto fwd = nn::model_forward(model, model_input(window.values));
  return class_activation_map(fwd.feature_maps, model.head_weight, class_index);
}

/// Min-max scaling to [0, 1]; a constant series maps to all zeros.
inline std::vector<double> cam_normalize(std::span<const double> cam) {
  std::vector<double> out(cam.size(), 0.0);
  if (cam.empty()) return out;
  for (double v : cam) require(std::isfinite(v), ErrorCode::kNonFiniteValue, "non-finite CAM value");
  const auto [lo, hi] = std::minmax_element(cam.begin(), cam.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t t = 0; t < cam.size(); ++t) out[t] = std::clamp((cam[t] - *lo) / range, 0.0, 1.0);
  return out;
}

inline std::vector<double> cam_average(std::span<const std::vector<double>> cams) {
  require(!cams.empty(), ErrorCode::kEmptyInput, "no CAMs to average");
  const std::size_t T = cams.front().size();
  std::vector<double> avg(T, 0.0);
  for (const auto& cam : cams) {
    require(cam.size() == T, ErrorCode::kLengthMismatch, "CAMs differ in length");
    for (std::size_t t = 0; t < T; ++t) avg[t] += cam[t];
  }
  const double n = static_cast<double>(cams.size());
  for (double& v : avg) v /= n;
  return avg;
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Input after the configured transform. A constant window z-scores to zeros.
inline std::vector<double> transform_input(std::span<const double> x, InputTransform transform) {
  if (transform == InputTransform::kRaw) return {x.begin(), x.end()};
  return nn::standardize(x);
}

/// s(t) = sigmoid(cam_avg(t) * x~(t)).
inline std::vector<double> attention_scores(std::span<const double> cam_avg, std::span<const double> x,
                                            InputTransform transform) {
  require(cam_avg.size() == x.size(), ErrorCode::kLengthMismatch, "CAM and window lengths differ");
  const auto xt = transform_input(x, transform);
  std::vector<double> s(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) s[t] = sigmoid(cam_avg[t] * xt[t]);
  return s;
}

/// y(t) = 1 iff s(t) > threshold (strict).
inline std::vector<std::uint8_t> binarize_status(std::span<const double> s, double threshold) {
  std::vector<std::uint8_t> y(s.size());
  for (std::size_t t = 0; t < s.size(); ++t) y[t] = s[t] > threshold ? 1 : 0;
  return y;
}

inline void check_window(const CamalEnsemble& ens, const data::Window& window) {
  require(window.length() == ens.window_length, ErrorCode::kLengthMismatch,
          "window has " + std::to_string(window.length()) + " steps, ensemble expects " +
              std::to_string(ens.window_length));
}

inline DetectionResult ensemble_predict(const CamalEnsemble& ens, const data::Window& window) {
  ens.validate();
  check_window(ens, window);
  const nn::Tensor x = model_input(window.values);
  DetectionResult r;
  for (const auto& model : ens.models) r.per_model_probs.push_back(nn::model_forward(model, x).probs[1]);
  r.prob_ensemble = mean_probability(r.per_model_probs);
  r.detected = detect(r.prob_ensemble, ens.detection_threshold);
  return r;
}

/// Full detection + localization for one window. Undetected windows get an
/// all-zero status series.
inline Localization localize_window(const CamalEnsemble& ens, const data::Window& window) {
  ens.validate();
  check_window(ens, window);
  const nn::Tensor x = model_input(window.values);
  Localization out;
  std::vector<std::vector<double>> cams;
  cams.reserve(ens.models.size());
  for (const auto& model : ens.models) {
    const auto fwd = nn::model_forward(model, x);
    out.detection.per_model_probs.push_back(fwd.probs[1]);
    cams.push_back(class_activation_map(fwd.feature_maps, model.head_weight, 1));
  }
  out.detection.prob_ensemble = mean_probability(out.detection.per_model_probs);
  out.detection.detected = detect(out.detection.prob_ensemble, ens.detection_threshold);
  if (!out.detection.detected) {
    out.status = StatusSeries::zeros(window.length());
    return out;
  }
  for (auto& cam : cams) cam = cam_normalize(cam);
  out.status.cam_avg = cam_average(cams);
  out.status.s = attention_scores(out.status.cam_avg, window.values, ens.localization.transform);
  out.status.y_hat = binarize_status(out.status.s, ens.localization.status_threshold);
  return out;
}

}  // namespace devicescope::camal
