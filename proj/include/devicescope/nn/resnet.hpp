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
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "devicescope/nn/layers.hpp"
#include "devicescope/nn/tensor.hpp"

namespace devicescope::nn {

inline constexpr std::size_t kNumClasses = 2;

struct ResNetConfig {
  std::size_t kernel_size = 9;
  std::vector<std::size_t> filters = {32, 64, 64};  // one entry per residual block
  std::size_t convs_per_block = 3;
  std::size_t input_channels = 1;

  void validate() const {
    require(kernel_size % 2 == 1, ErrorCode::kInvalidConfig, "kernel size must be odd");
    require(!filters.empty(), ErrorCode::kInvalidConfig, "need at least one residual block");
    for (std::size_t f : filters) require(f > 0, ErrorCode::kInvalidConfig, "filter count must be positive");
    require(convs_per_block >= 1, ErrorCode::kInvalidConfig, "need at least one conv per block");
    require(input_channels >= 1, ErrorCode::kInvalidConfig, "need at least one input channel");
  }

  bool operator==(const ResNetConfig&) const = default;
};

/// Stacked conv + batch-norm layers with an additive shortcut; ReLU between
/// layers and after the sum. The shortcut is a 1x1 projection when the
/// channel count changes.
struct ResidualBlock {
  std::vector<Conv1d> convs;
  std::vector<BatchNorm1d> norms;
  std::optional<Conv1d> shortcut;

  ResidualBlock() = default;
  ResidualBlock(std::size_t in, std::size_t out, std::size_t k, std::size_t layers) {
    for (std::size_t i = 0; i < layers; ++i) {
      convs.emplace_back(i == 0 ? in : out, out, k);
      norms.emplace_back(out);
    }
    if (in != out) shortcut.emplace(in, out, 1);
  }

  std::size_t in_channels() const { return convs.front().in_channels; }
  std::size_t out_channels() const { return convs.front().out_channels; }
};

/// One convolutional residual classifier with a GAP + linear two-class head.
struct ResNetModel {
  ResNetConfig config;
  std::vector<ResidualBlock> blocks;
  Matrix head_weight;  // classes x K
  Vector head_bias;
  bool trained = false;
  std::uint64_t init_seed = 0;
  std::uint64_t train_seed = 0;

  std::size_t feature_maps() const { return config.filters.back(); }

  /// Zero-valued parameters with identity batch-norm affine.
  static ResNetModel zeros(const ResNetConfig& config) {
    config.validate();
    ResNetModel m;
    m.config = config;
    std::size_t in = config.input_channels;
    for (std::size_t f : config.filters) {
      m.blocks.emplace_back(in, f, config.kernel_size, config.convs_per_block);
      in = f;
    }
    m.head_weight = Matrix::Zero(kNumClasses, static_cast<Eigen::Index>(in));
    m.head_bias = Vector::Zero(kNumClasses);
    return m;
  }

  /// Seeded uniform fan-in initialization: conv and head weights are drawn
  /// from U(-sqrt(6/fan_in), sqrt(6/fan_in)) and U(-1/sqrt(K), 1/sqrt(K)).
  static ResNetModel initialize(const ResNetConfig& config, std::uint64_t seed) {
    ResNetModel m = zeros(config);
    m.init_seed = seed;
    std::mt19937_64 rng(seed);
    auto fill = [&](Matrix& w, double bound) {
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    };
    for (auto& block : m.blocks) {
      for (auto& conv : block.convs) fill(conv.weight, std::sqrt(6.0 / static_cast<double>(conv.weight.cols())));
      if (block.shortcut) {
        fill(block.shortcut->weight, std::sqrt(6.0 / static_cast<double>(block.shortcut->weight.cols())));
      }
    }
    fill(m.head_weight, 1.0 / std::sqrt(static_cast<double>(m.head_weight.cols())));
    return m;
  }
};

struct ParameterRef {
  std::string name;
  std::span<double> values;
};

template <typename Derived>
std::span<double> as_span(Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

/// Trainable parameters in a fixed order; identical for equal configs.
inline std::vector<ParameterRef> parameters(ResNetModel& m) {
  std::vector<ParameterRef> out;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    auto& block = m.blocks[b];
    const std::string prefix = "block" + std::to_string(b) + ".";
    for (std::size_t i = 0; i < block.convs.size(); ++i) {
      const std::string id = std::to_string(i);
      out.push_back({prefix + "conv" + id + ".weight", as_span(block.convs[i].weight)});
      out.push_back({prefix + "conv" + id + ".bias", as_span(block.convs[i].bias)});
      out.push_back({prefix + "bn" + id + ".gamma", as_span(block.norms[i].gamma)});
      out.push_back({prefix + "bn" + id + ".beta", as_span(block.norms[i].beta)});
    }
    if (block.shortcut) {
      out.push_back({prefix + "shortcut.weight", as_span(block.shortcut->weight)});
      out.push_back({prefix + "shortcut.bias", as_span(block.shortcut->bias)});
    }
  }
  out.push_back({"head.weight", as_span(m.head_weight)});
  out.push_back({"head.bias", as_span(m.head_bias)});
  return out;
}

/// Batch-norm running statistics (not trained by gradient).
inline std::vector<ParameterRef> buffers(ResNetModel& m) {
  std::vector<ParameterRef> out;
  for (std::size_t b = 0; b < m.blocks.size(); ++b) {
    for (std::size_t i = 0; i < m.blocks[b].norms.size(); ++i) {
      const std::string prefix = "block" + std::to_string(b) + ".bn" + std::to_string(i) + ".";
      out.push_back({prefix + "running_mean", as_span(m.blocks[b].norms[i].running_mean)});
      out.push_back({prefix + "running_var", as_span(m.blocks[b].norms[i].running_var)});
    }
  }
  return out;
}

enum class Mode { kTrain, kInference };

struct BlockCache {
  Matrix input;
  std::vector<Matrix> conv_inputs;
  std::vector<BatchNormCache> norms;
  std::vector<Matrix> pre_activations;  // one per conv; the last includes the shortcut
};

/// Everything the backward pass needs from one batched forward pass.
struct ForwardCache {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<BlockCache> blocks;
  Matrix features;  // K x batch*length, last block post-activation
  Matrix pooled;    // batch x K
  Matrix logits;    // batch x classes
  Matrix probs;     // batch x classes
};

inline Matrix residual_block_forward(const ResidualBlock& block, const Matrix& x, std::size_t length, Mode mode,
                                     BlockCache* cache = nullptr) {
  require(static_cast<std::size_t>(x.rows()) == block.in_channels(), ErrorCode::kShapeMismatch,
          "residual block input channel mismatch");
  if (cache) {
    cache->input = x;
    cache->conv_inputs.clear();
    cache->norms.assign(block.convs.size(), {});
    cache->pre_activations.clear();
  }
  Matrix h = x;
  for (std::size_t i = 0; i < block.convs.size(); ++i) {
    Matrix z = conv1d_forward(block.convs[i], h, length);
    Matrix a;
    if (mode == Mode::kTrain) {
      BatchNormCache local;
      a = batchnorm_forward_train(block.norms[i], z, cache ? cache->norms[i] : local);
    } else {
      a = batchnorm_forward_inference(block.norms[i], z);
    }
    if (i + 1 == block.convs.size()) {
      if (block.shortcut) {
        a += conv1d_forward(*block.shortcut, x, length);
      } else {
        a += x;
      }
    }
    if (cache) {
      cache->conv_inputs.push_back(std::move(h));
      cache->pre_activations.push_back(a);
    }
    h = relu(a);
  }
  return h;
}

inline Tensor residual_block_forward(const ResidualBlock& block, const Tensor& x, Mode mode = Mode::kInference) {
  return Tensor(residual_block_forward(block, x.matrix(), x.length(), mode));
}

/// Returns dL/dx and accumulates parameter gradients into `grad`.
inline Matrix residual_block_backward(const ResidualBlock& block, const BlockCache& cache, const Matrix& dout,
                                      std::size_t length, ResidualBlock& grad, bool need_input_grad) {
  const std::size_t n = block.convs.size();
  Matrix d = relu_backward(cache.pre_activations[n - 1], dout);
  Matrix dx;
  if (block.shortcut) {
    dx = conv1d_backward(*block.shortcut, cache.input, d, length, *grad.shortcut, need_input_grad);
  } else if (need_input_grad) {
    dx = d;
  }
  for (std::size_t i = n; i-- > 0;) {
    if (i + 1 < n) d = relu_backward(cache.pre_activations[i], d);
    d = batchnorm_backward(block.norms[i], cache.norms[i], d, grad.norms[i]);
    const bool want = need_input_grad || i > 0;
    d = conv1d_backward(block.convs[i], cache.conv_inputs[i], d, length, grad.convs[i], want);
  }
  if (need_input_grad) dx += d;
  return dx;
}

/// Batched forward: `x` is (input_channels x batch*length).
inline ForwardCache forward_batch(const ResNetModel& model, const Matrix& x, std::size_t length, Mode mode,
                                  bool keep_cache) {
  require(length > 0 && x.cols() % static_cast<Eigen::Index>(length) == 0, ErrorCode::kShapeMismatch,
          "input width is not a multiple of the sequence length");
  require(static_cast<std::size_t>(x.rows()) == model.config.input_channels, ErrorCode::kShapeMismatch,
          "model input channel mismatch");
  require_finite(x, "model input");
  ForwardCache cache;
  cache.length = length;
  cache.batch = static_cast<std::size_t>(x.cols()) / length;
  if (keep_cache) cache.blocks.resize(model.blocks.size());
  Matrix h = x;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    h = residual_block_forward(model.blocks[b], h, length, mode, keep_cache ? &cache.blocks[b] : nullptr);
    require_finite(h, "residual block output");
  }
  cache.features = std::move(h);
  cache.pooled = gap(cache.features, length);
  cache.logits = cache.pooled * model.head_weight.transpose();
  cache.logits.rowwise() += model.head_bias.transpose();
  require_finite(cache.logits, "logits");
  cache.probs = softmax(cache.logits);
  return cache;
}

/// Stacks equal-length single-channel series into a batch matrix.
inline Matrix stack_batch(std::span<const std::vector<double>> series) {
  require(!series.empty(), ErrorCode::kEmptyInput, "empty batch");
  const std::size_t T = series.front().size();
  Matrix x(1, static_cast<Eigen::Index>(series.size() * T));
  for (std::size_t b = 0; b < series.size(); ++b) {
    require(series[b].size() == T, ErrorCode::kLengthMismatch, "batch series differ in length");
    std::copy(series[b].begin(), series[b].end(), x.data() + b * T);
  }
  return x;
}

struct ForwardResult {
  std::array<double, kNumClasses> probs{};
  std::array<double, kNumClasses> logits{};
  Tensor feature_maps;  // K x T, exactly what GAP consumes
};

/// Inference-mode forward of a single (input_channels, T) tensor.
inline ForwardResult model_forward(const ResNetModel& model, const Tensor& x) {
  ForwardCache c = forward_batch(model, x.matrix(), x.length(), Mode::kInference, false);
  ForwardResult r;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    r.probs[k] = c.probs(0, static_cast<Eigen::Index>(k));
    r.logits[k] = c.logits(0, static_cast<Eigen::Index>(k));
  }
  r.feature_maps = Tensor(std::move(c.features));
  return r;
}

struct GradientResult {
  ResNetModel gradients;  // same shapes as the model's parameters
  double loss = 0.0;
  ForwardCache cache;
};

/// Weighted mean cross-entropy, loss = (1/B) sum_i w_i * -log p_i[y_i],
/// and its gradient with respect to every parameter. Batch-norm layers use
/// batch statistics (training mode).
inline GradientResult backward_gradients(const ResNetModel& model, const Matrix& x, std::size_t length,
                                         std::span<const int> labels, std::span<const double> weights = {}) {
  require(length > 0 && x.cols() > 0, ErrorCode::kEmptyInput, "empty batch");
  GradientResult r;
  r.cache = forward_batch(model, x, length, Mode::kTrain, true);
  const ForwardCache& c = r.cache;
  require(labels.size() == c.batch, ErrorCode::kLengthMismatch, "one label per sample required");
  require(weights.empty() || weights.size() == c.batch, ErrorCode::kLengthMismatch,
          "one weight per sample required");

  const double inv_batch = 1.0 / static_cast<double>(c.batch);
  Matrix dlogits = c.probs;
  double loss = 0.0;
  for (std::size_t i = 0; i < c.batch; ++i) {
    const int y = labels[i];
    require(y == 0 || y == 1, ErrorCode::kInvalidArgument, "labels must be 0 or 1");
    const double w = weights.empty() ? 1.0 : weights[i];
    const auto row = static_cast<Eigen::Index>(i);
    // log-softmax computed from logits for accuracy near saturation.
    const double m = c.logits.row(row).maxCoeff();
    const double lse = m + std::log((c.logits.row(row).array() - m).exp().sum());
    loss += w * (lse - c.logits(row, y));
    dlogits(row, y) -= 1.0;
    dlogits.row(row) *= w * inv_batch;
  }
  r.loss = loss * inv_batch;
  if (!std::isfinite(r.loss)) throw Error(ErrorCode::kNonFiniteLoss, "loss is not finite");

  r.gradients = ResNetModel::zeros(model.config);
  ResNetModel& g = r.gradients;
  for (auto& p : parameters(g)) std::fill(p.values.begin(), p.values.end(), 0.0);
  g.head_weight.noalias() = dlogits.transpose() * c.pooled;
  g.head_bias = dlogits.colwise().sum().transpose();

  const Matrix dpooled = dlogits * model.head_weight;  // batch x K
  const auto T = static_cast<Eigen::Index>(length);
  Matrix d(c.features.rows(), c.features.cols());
  for (std::size_t b = 0; b < c.batch; ++b) {
    d.middleCols(static_cast<Eigen::Index>(b) * T, T).colwise() =
        dpooled.row(static_cast<Eigen::Index>(b)).transpose() / static_cast<double>(length);
  }
  for (std::size_t b = model.blocks.size(); b-- > 0;) {
    d = residual_block_backward(model.blocks[b], c.blocks[b], d, length, g.blocks[b], b > 0);
  }
  return r;
}

inline GradientResult backward_gradients(const ResNetModel& model, std::span<const Tensor> batch,
                                         std::span<const int> labels, std::span<const double> weights = {}) {
  require(!batch.empty(), ErrorCode::kEmptyInput, "empty batch");
  const std::size_t T = batch.front().length();
  const std::size_t C = batch.front().channels();
  Matrix x(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(batch.size() * T));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    require(batch[b].length() == T && batch[b].channels() == C, ErrorCode::kShapeMismatch,
            "batch tensors differ in shape");
    x.middleCols(static_cast<Eigen::Index>(b * T), static_cast<Eigen::Index>(T)) = batch[b].matrix();
  }
  return backward_gradients(model, x, T, labels, weights);
}

/// Folds the batch statistics of a training-mode pass into running stats.
inline void apply_running_stats(ResNetModel& model, const ForwardCache& cache) {
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    for (std::size_t i = 0; i < model.blocks[b].norms.size(); ++i) {
      update_running_stats(model.blocks[b].norms[i], cache.blocks[b].norms[i]);
    }
  }
}

}  // namespace devicescope::nn
