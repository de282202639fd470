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
#include <string>

#include "devicescope/nn/tensor.hpp"

namespace devicescope::nn {

/// 1D convolution (cross-correlation) with "same" zero padding.
struct Conv1d {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 1;
  Matrix weight;  // out x (in * k); column c*k + j is tap j of input channel c
  Vector bias;

  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::size_t k)
      : in_channels(in), out_channels(out), kernel_size(k),
        weight(Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in * k))),
        bias(Vector::Zero(static_cast<Eigen::Index>(out))) {
    require(k % 2 == 1, ErrorCode::kShapeMismatch, "kernel size must be odd");
  }

  std::size_t padding() const noexcept { return kernel_size / 2; }
};

struct BatchNorm1d {
  std::size_t channels = 0;
  Vector gamma, beta;
  Vector running_mean, running_var;
  double momentum = 0.9;  // running = momentum * running + (1 - momentum) * batch
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t c)
      : channels(c),
        gamma(Vector::Ones(static_cast<Eigen::Index>(c))),
        beta(Vector::Zero(static_cast<Eigen::Index>(c))),
        running_mean(Vector::Zero(static_cast<Eigen::Index>(c))),
        running_var(Vector::Ones(static_cast<Eigen::Index>(c))) {}
};

namespace detail {

// Unfolds sample `b` of x into cols (in*k x length) so that conv = W * cols.
inline void im2col(const Matrix& x, std::size_t b, std::size_t length, std::size_t k, Matrix& cols) {
  const auto T = static_cast<std::ptrdiff_t>(length);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t in = static_cast<std::size_t>(x.rows());
  cols.resize(static_cast<Eigen::Index>(in * k), static_cast<Eigen::Index>(length));
  for (std::size_t c = 0; c < in; ++c) {
    const double* src = x.data() + c * static_cast<std::size_t>(x.cols()) + b * length;
    for (std::size_t j = 0; j < k; ++j) {
      double* dst = cols.data() + (c * k + j) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
      for (std::ptrdiff_t t = 0; t < lo; ++t) dst[t] = 0.0;
      for (std::ptrdiff_t t = lo; t < hi; ++t) dst[t] = src[t + shift];
      for (std::ptrdiff_t t = std::max(hi, lo); t < T; ++t) dst[t] = 0.0;
    }
  }
}

// Adjoint of im2col: scatters cols back into sample `b` of dx (accumulating).
inline void col2im(const Matrix& cols, std::size_t b, std::size_t length, std::size_t k, Matrix& dx) {
  const auto T = static_cast<std::ptrdiff_t>(length);
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t in = static_cast<std::size_t>(dx.rows());
  for (std::size_t c = 0; c < in; ++c) {
    double* dst = dx.data() + c * static_cast<std::size_t>(dx.cols()) + b * length;
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = cols.data() + (c * k + j) * length;
      const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(T, T - shift);
      for (std::ptrdiff_t t = lo; t < hi; ++t) dst[t + shift] += src[t];
    }
  }
}

inline void check_conv_input(const Conv1d& conv, const Matrix& x, std::size_t length) {
  require(static_cast<std::size_t>(x.rows()) == conv.in_channels, ErrorCode::kShapeMismatch,
          "conv expects " + std::to_string(conv.in_channels) + " input channels, got " +
              std::to_string(x.rows()));
  require(length > 0 && static_cast<std::size_t>(x.cols()) % length == 0, ErrorCode::kShapeMismatch,
          "activation width is not a multiple of the sequence length");
}

}  // namespace detail

/// Batched forward pass; output has the same time length as the input.
inline Matrix conv1d_forward(const Conv1d& conv, const Matrix& x, std::size_t length) {
  detail::check_conv_input(conv, x, length);
  const std::size_t batch = static_cast<std::size_t>(x.cols()) / length;
  const auto T = static_cast<Eigen::Index>(length);
  Matrix y(static_cast<Eigen::Index>(conv.out_channels), x.cols());
  if (conv.kernel_size == 1) {
    y.noalias() = conv.weight * x;
  } else {
    Matrix cols;
    for (std::size_t b = 0; b < batch; ++b) {
      detail::im2col(x, b, length, conv.kernel_size, cols);
      y.middleCols(static_cast<Eigen::Index>(b) * T, T).noalias() = conv.weight * cols;
    }
  }
  y.colwise() += conv.bias;
  return y;
}

/// Single-sample form on (C_in, T) tensors.
inline Tensor conv1d_forward(const Conv1d& conv, const Tensor& x) {
  return Tensor(conv1d_forward(conv, x.matrix(), x.length()));
}

/// Accumulates weight/bias gradients into `grad` and returns dL/dx when
/// `need_input_grad` is set (an empty matrix otherwise).
inline Matrix conv1d_backward(const Conv1d& conv, const Matrix& x, const Matrix& dy, std::size_t length,
                              Conv1d& grad, bool need_input_grad = true) {
  const std::size_t batch = static_cast<std::size_t>(x.cols()) / length;
  const auto T = static_cast<Eigen::Index>(length);
  grad.bias += dy.rowwise().sum();
  Matrix dx;
  if (need_input_grad) dx = Matrix::Zero(x.rows(), x.cols());
  if (conv.kernel_size == 1) {
    grad.weight.noalias() += dy * x.transpose();
    if (need_input_grad) dx.noalias() = conv.weight.transpose() * dy;
    return dx;
  }
  Matrix cols, dcols;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto dy_b = dy.middleCols(static_cast<Eigen::Index>(b) * T, T);
    detail::im2col(x, b, length, conv.kernel_size, cols);
    grad.weight.noalias() += dy_b * cols.transpose();
    if (need_input_grad) {
      dcols.noalias() = conv.weight.transpose() * dy_b;
      detail::col2im(dcols, b, length, conv.kernel_size, dx);
    }
  }
  return dx;
}

struct BatchNormCache {
  Matrix xhat;
  Vector inv_std;
  Vector batch_mean;
  Vector batch_var;  // biased
};

/// Training-mode normalization with statistics over every (sample, time) column.
inline Matrix batchnorm_forward_train(const BatchNorm1d& bn, const Matrix& x, BatchNormCache& cache) {
  require(static_cast<std::size_t>(x.rows()) == bn.channels, ErrorCode::kShapeMismatch,
          "batch-norm channel mismatch");
  const double n = static_cast<double>(x.cols());
  cache.batch_mean = x.rowwise().mean();
  cache.xhat = x.colwise() - cache.batch_mean;
  cache.batch_var = cache.xhat.array().square().rowwise().sum() / n;
  cache.inv_std = (cache.batch_var.array() + bn.eps).rsqrt();
  cache.xhat.array().colwise() *= cache.inv_std.array();
  Matrix y = cache.xhat;
  y.array().colwise() *= bn.gamma.array();
  y.colwise() += bn.beta;
  return y;
}

inline Matrix batchnorm_forward_inference(const BatchNorm1d& bn, const Matrix& x) {
  require(static_cast<std::size_t>(x.rows()) == bn.channels, ErrorCode::kShapeMismatch,
          "batch-norm channel mismatch");
  const Vector scale = bn.gamma.array() * (bn.running_var.array() + bn.eps).rsqrt();
  const Vector shift = bn.beta.array() - bn.running_mean.array() * scale.array();
  Matrix y = x;
  y.array().colwise() *= scale.array();
  y.colwise() += shift;
  return y;
}

inline Matrix batchnorm_backward(const BatchNorm1d& bn, const BatchNormCache& cache, const Matrix& dy,
                                 BatchNorm1d& grad) {
  const double n = static_cast<double>(dy.cols());
  grad.beta += dy.rowwise().sum();
  grad.gamma += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  Matrix dxhat = dy;
  dxhat.array().colwise() *= bn.gamma.array();
  const Vector sum_dxhat = dxhat.rowwise().sum();
  const Vector sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().sum();
  Matrix dx = dxhat * n;
  dx.colwise() -= sum_dxhat;
  dx.array() -= cache.xhat.array().colwise() * sum_dxhat_xhat.array();
  dx.array().colwise() *= (cache.inv_std.array() / n);
  return dx;
}

inline void update_running_stats(BatchNorm1d& bn, const BatchNormCache& cache) {
  const double n = static_cast<double>(cache.xhat.cols());
  const double unbias = n > 1 ? n / (n - 1) : 1.0;
  bn.running_mean = bn.momentum * bn.running_mean + (1.0 - bn.momentum) * cache.batch_mean;
  bn.running_var = bn.momentum * bn.running_var + (1.0 - bn.momentum) * unbias * cache.batch_var;
}

inline Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

inline Matrix relu_backward(const Matrix& pre, const Matrix& dy) {
  return (pre.array() > 0.0).select(dy.array(), 0.0).matrix();
}

/// Global average pooling: per-channel mean over time, one row per sample
/// in the result (batch x channels).
inline Matrix gap(const Matrix& x, std::size_t length) {
  const std::size_t batch = static_cast<std::size_t>(x.cols()) / length;
  const auto T = static_cast<Eigen::Index>(length);
  Matrix pooled(static_cast<Eigen::Index>(batch), x.rows());
  for (std::size_t b = 0; b < batch; ++b) {
    pooled.row(static_cast<Eigen::Index>(b)) =
        x.middleCols(static_cast<Eigen::Index>(b) * T, T).rowwise().mean().transpose();
  }
  return pooled;
}

inline Vector gap(const Tensor& x) {
  require(x.length() >= 1, ErrorCode::kShapeMismatch, "gap needs at least one timestep");
  return x.matrix().rowwise().mean();
}

/// Row-wise softmax with max subtraction.
inline Matrix softmax(const Matrix& logits) {
  Matrix p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

}  // namespace devicescope::nn
