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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/numerics/grid.hpp"

namespace diffaug {

struct AdamWConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamWState {
  AdamWConfig config;
  std::vector<BasicGrid<T>> m;
  std::vector<BasicGrid<T>> v;
  std::int64_t step = 0;

  AdamWState() = default;
  explicit AdamWState(AdamWConfig c) : config(c) {}
};

/// One decoupled-weight-decay Adam update with bias correction:
///   p <- p - lr*wd*p - lr * mhat / (sqrt(vhat) + eps)
/// Moments are allocated on the first call.
template <class T>
void adamw_step(std::span<BasicGrid<T>> params, std::span<const BasicGrid<T>> grads,
                AdamWState<T>& state) {
  const auto& c = state.config;
  if (!(c.lr > 0.0)) throw std::invalid_argument("adamw: learning rate must be positive");
  if (params.size() != grads.size()) {
    throw ShapeError("adamw: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].shape(), grads[i].shape(), "adamw");
    if (!grads[i].all_finite()) {
      throw NonFiniteError("adamw: non-finite gradient for parameter " + std::to_string(i));
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  } else if (state.m.size() != params.size()) {
    throw ShapeError("adamw: optimizer state tracks a different parameter count");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    require_same_shape(m.shape(), p.shape(), "adamw state");
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = c.beta1 * static_cast<double>(m[j]) + (1.0 - c.beta1) * gj;
      const double vj = c.beta2 * static_cast<double>(v[j]) + (1.0 - c.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1, vhat = vj / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) * decay -
                            c.lr * mhat / (std::sqrt(vhat) + c.eps));
    }
  }
}

template <class T>
void adamw_step(std::vector<BasicGrid<T>>& params, const std::vector<BasicGrid<T>>& grads,
                AdamWState<T>& state) {
  adamw_step(std::span<BasicGrid<T>>(params), std::span<const BasicGrid<T>>(grads), state);
}

}  // namespace diffaug
