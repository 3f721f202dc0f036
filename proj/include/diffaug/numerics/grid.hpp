// Copyright (c) 2026 The diffaug Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diffaug/error.hpp"

namespace diffaug {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

/// Dense row-major N-dimensional array. Value semantic.
template <class T>
class BasicGrid {
 public:
  using value_type = T;

  BasicGrid() = default;

  explicit BasicGrid(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    check_dims();
  }

  BasicGrid(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static BasicGrid scalar(T v) { return BasicGrid(Shape{1}, std::vector<T>{v}); }

  template <class U>
  static BasicGrid cast(const BasicGrid<U>& other) {
    std::vector<T> d(other.data().begin(), other.data().end());
    return BasicGrid(other.shape(), std::move(d));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T item() const {
    if (data_.size() != 1) {
      throw ShapeError("item() on grid of shape " + shape_string(shape_));
    }
    return data_[0];
  }

  BasicGrid reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " +
                       shape_string(shape));
    }
    return BasicGrid(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const BasicGrid& a, const BasicGrid& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (auto d : shape_) {
      if (d == 0) throw ShapeError("grid dimensions must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using Grid = BasicGrid<float>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) +
                     " vs " + shape_string(b));
  }
}

/// Returns the single sample `index` of a batch grid [N, ...] as a grid of
/// the trailing shape.
template <class T>
BasicGrid<T> batch_item(const BasicGrid<T>& batch, std::size_t index) {
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  if (inner.empty()) inner = {1};
  const std::size_t n = shape_numel(inner);
  std::vector<T> d(batch.data().begin() + index * n,
                   batch.data().begin() + (index + 1) * n);
  return BasicGrid<T>(std::move(inner), std::move(d));
}

/// Stacks equally shaped grids along a new leading axis.
template <class T>
BasicGrid<T> stack(std::span<const BasicGrid<T>> items) {
  if (items.empty()) throw ShapeError("stack: no items");
  Shape shape = items[0].shape();
  std::vector<T> d;
  d.reserve(items.size() * items[0].numel());
  for (const auto& g : items) {
    require_same_shape(g.shape(), items[0].shape(), "stack");
    d.insert(d.end(), g.data().begin(), g.data().end());
  }
  shape.insert(shape.begin(), items.size());
  return BasicGrid<T>(std::move(shape), std::move(d));
}

template <class T>
BasicGrid<T> stack(const std::vector<BasicGrid<T>>& items) {
  return stack(std::span<const BasicGrid<T>>(items));
}

}  // namespace diffaug
