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
#include <span>
#include <string>
#include <utility>

#include <Eigen/Core>

#include "devicescope/common.hpp"

namespace devicescope::nn {

// Activations are (channels x batch*length) with each channel row contiguous
// in time; sample b occupies columns [b*length, (b+1)*length).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A (channels, length) block of double-precision values, row-major by channel.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::size_t length) : values_(Matrix::Zero(channels, length)) {}
  explicit Tensor(Matrix values) : values_(std::move(values)) {}

  static Tensor from_series(std::span<const double> x) {
    Tensor t(1, x.size());
    for (std::size_t i = 0; i < x.size(); ++i) t.values_(0, static_cast<Eigen::Index>(i)) = x[i];
    return t;
  }

  std::size_t channels() const noexcept { return static_cast<std::size_t>(values_.rows()); }
  std::size_t length() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  double operator()(std::size_t c, std::size_t t) const {
    return values_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t));
  }
  double& operator()(std::size_t c, std::size_t t) {
    return values_(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t));
  }

  std::span<const double> channel(std::size_t c) const {
    return {values_.data() + c * length(), length()};
  }
  std::span<const double> data() const { return {values_.data(), static_cast<std::size_t>(values_.size())}; }
  std::span<double> data() { return {values_.data(), static_cast<std::size_t>(values_.size())}; }

  const Matrix& matrix() const noexcept { return values_; }
  Matrix& matrix() noexcept { return values_; }

  bool all_finite() const { return values_.allFinite(); }

 private:
  Matrix values_;
};

inline void require_finite(const Matrix& m, const char* where) {
  if (!m.allFinite()) throw Error(ErrorCode::kNonFiniteValue, std::string("non-finite values at ") + where);
}

}  // namespace devicescope::nn
