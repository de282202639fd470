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
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "devicescope/data/types.hpp"
#include "devicescope/nn/resnet.hpp"
#include "devicescope/nn/standardize.hpp"

namespace devicescope::nn {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool balance_classes = true;  // inverse-frequency sample weights

  void validate() const {
    require(epochs >= 1, ErrorCode::kInvalidConfig, "epochs must be at least 1");
    require(batch_size >= 1, ErrorCode::kInvalidConfig, "batch_size must be at least 1");
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kInvalidConfig,
            "learning_rate must be positive");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
            ErrorCode::kInvalidConfig, "bad optimizer hyperparameters");
  }
};

struct TrainResult {
  ResNetModel model;
  std::vector<double> loss_history;  // mean training loss per epoch
};

using ProgressFn = std::function<void(std::size_t epoch, double loss)>;

/// Adaptive-moment optimizer state over the flattened parameter vector.
class Adam {
 public:
  Adam(const ResNetModel& model, const TrainConfig& cfg) : cfg_(cfg) {
    ResNetModel copy = model;
    std::size_t n = 0;
    for (const auto& p : parameters(copy)) n += p.values.size();
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }

  void step(ResNetModel& model, ResNetModel& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    auto params = parameters(model);
    auto gs = parameters(grads);
    std::size_t off = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto w = params[p].values;
      auto g = gs[p].values;
      for (std::size_t i = 0; i < w.size(); ++i, ++off) {
        m_[off] = cfg_.beta1 * m_[off] + (1.0 - cfg_.beta1) * g[i];
        v_[off] = cfg_.beta2 * v_[off] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m_[off] / c1;
        const double vhat = v_[off] / c2;
        w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Mini-batch training on weak labels only. Inputs are z-scored per window.
/// Deterministic for a given (model, windows, config).
inline TrainResult train(ResNetModel model, std::span<const data::Window> windows, const TrainConfig& cfg,
                         const ProgressFn& progress = {}) {
  cfg.validate();
  require(!windows.empty(), ErrorCode::kEmptyInput, "no training windows");
  const std::size_t T = windows.front().length();
  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  inputs.reserve(windows.size());
  for (const auto& w : windows) {
    require(w.length() == T, ErrorCode::kLengthMismatch, "training windows differ in length");
    require(w.weak_label.has_value(), ErrorCode::kNoGroundTruthAvailable, "training window without weak label");
    inputs.push_back(standardize(w.values));
    labels.push_back(*w.weak_label);
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  require(positives > 0 && positives < labels.size(), ErrorCode::kSingleClassTrainingSet,
          "training set needs both classes (" + std::to_string(positives) + " of " +
              std::to_string(labels.size()) + " positive)");

  std::array<double, 2> class_weight = {1.0, 1.0};
  if (cfg.balance_classes) {
    const double n = static_cast<double>(labels.size());
    class_weight[0] = n / (2.0 * static_cast<double>(labels.size() - positives));
    class_weight[1] = n / (2.0 * static_cast<double>(positives));
  }

  Adam optimizer(model, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with a fixed draw rule keeps the order reproducible.
    for (std::size_t i = order.size(); i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(rng() % (i + 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t B = end - start;
      Matrix x(1, static_cast<Eigen::Index>(B * T));
      std::vector<int> y(B);
      std::vector<double> w(B);
      for (std::size_t i = 0; i < B; ++i) {
        const std::size_t idx = order[start + i];
        std::copy(inputs[idx].begin(), inputs[idx].end(), x.data() + i * T);
        y[i] = labels[idx];
        w[i] = class_weight[static_cast<std::size_t>(y[i])];
      }
      GradientResult g = backward_gradients(model, x, T, y, w);
      apply_running_stats(model, g.cache);
      optimizer.step(model, g.gradients);
      epoch_loss += g.loss * static_cast<double>(B);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.loss_history.push_back(epoch_loss);
    if (progress) progress(epoch + 1, epoch_loss);
  }
  model.trained = true;
  model.train_seed = cfg.seed;
  result.model = std::move(model);
  return result;
}

}  // namespace devicescope::nn
