/*
 * Copyright 2026 The FDSP Lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
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
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fdsp/errors.hpp"

namespace fdsp {

/// Dense row-major matrix of rank <= 2 with an optional gradient slot.
///
/// Scalar is float for everything that trains or ships on the wire; the
/// double instantiation exists so gradient checks can resolve small errors.
template <class Scalar>
struct basic_tensor {
  using value_type = Scalar;

  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Scalar> data;
  std::optional<std::vector<Scalar>> grad;
  bool requires_grad = false;

  basic_tensor() = default;
  basic_tensor(std::size_t r, std::size_t c, Scalar fill = Scalar{0})
      : rows(r), cols(c), data(r * c, fill) {}
  basic_tensor(std::size_t r, std::size_t c, std::vector<Scalar> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != rows * cols) {
      throw dimension_error("tensor payload of " + std::to_string(data.size()) +
                            " values does not fill shape " + shape_string(r, c));
    }
  }

  static basic_tensor from_rows(std::initializer_list<std::initializer_list<Scalar>> init) {
    basic_tensor t;
    t.rows = init.size();
    t.cols = t.rows == 0 ? 0 : init.begin()->size();
    t.data.reserve(t.rows * t.cols);
    for (const auto& row : init) {
      if (row.size() != t.cols) throw dimension_error("ragged initializer for tensor");
      t.data.insert(t.data.end(), row.begin(), row.end());
    }
    return t;
  }

  static basic_tensor scalar(Scalar v) { return basic_tensor(1, 1, v); }

  static basic_tensor identity(std::size_t n) {
    basic_tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = Scalar{1};
    return t;
  }

  template <class Rng>
  static basic_tensor gaussian(std::size_t r, std::size_t c, double stddev, Rng& rng) {
    basic_tensor t(r, c);
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& x : t.data) x = static_cast<Scalar>(dist(rng));
    return t;
  }

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  [[nodiscard]] bool is_scalar() const noexcept { return rows == 1 && cols == 1; }
  [[nodiscard]] bool same_shape(const basic_tensor& o) const noexcept {
    return rows == o.rows && cols == o.cols;
  }

  Scalar& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Scalar operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<Scalar> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const Scalar> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  /// Same payload viewed with a different shape; no gradient is carried over.
  [[nodiscard]] basic_tensor reshaped(std::size_t r, std::size_t c) const {
    if (r * c != data.size()) {
      throw dimension_error("cannot reshape " + shape() + " to " + shape_string(r, c));
    }
    return basic_tensor(r, c, data);
  }

  [[nodiscard]] basic_tensor row_slice(std::size_t first, std::size_t count) const {
    if (first + count > rows) throw index_error("row slice out of range for " + shape());
    return basic_tensor(count, cols,
                        std::vector<Scalar>(data.begin() + first * cols,
                                            data.begin() + (first + count) * cols));
  }

  template <class Other>
  [[nodiscard]] basic_tensor<Other> cast() const {
    basic_tensor<Other> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<Other>(data[i]);
    out.requires_grad = requires_grad;
    return out;
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), Scalar{0});
  }
  void clear_grad() { grad.reset(); }

  [[nodiscard]] std::string shape() const { return shape_string(rows, cols); }
  static std::string shape_string(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "x" + std::to_string(c) + ")";
  }

  /// Value equality (shape and payload); gradients are ignored.
  friend bool operator==(const basic_tensor& a, const basic_tensor& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

using Tensor = basic_tensor<float>;

/// Stacks tensors of equal width on top of each other.
template <class Scalar>
basic_tensor<Scalar> stack_rows(std::span<const basic_tensor<Scalar>> parts) {
  if (parts.empty()) return {};
  basic_tensor<Scalar> out;
  out.cols = parts.front().cols;
  for (const auto& p : parts) {
    if (p.cols != out.cols) {
      throw dimension_error("stack_rows width mismatch " + parts.front().shape() + " vs " +
                            p.shape());
    }
    out.rows += p.rows;
    out.data.insert(out.data.end(), p.data.begin(), p.data.end());
  }
  return out;
}

}  // namespace fdsp
