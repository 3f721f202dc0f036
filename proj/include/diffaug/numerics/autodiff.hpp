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
#include <span>
#include <vector>

#include "diffaug/numerics/tape.hpp"

namespace diffaug {

template <class T>
struct ValueAndGrads {
  BasicGrid<T> value;
  std::vector<BasicGrid<T>> grads;
};

/// Records `f(tape, vars)` over fresh leaves for `inputs` and
/// differentiates the scalar result with respect to each of them.
template <class T, class F>
ValueAndGrads<T> record_and_backward(F&& f, std::span<const BasicGrid<T>> inputs) {
  Tape<T> tape;
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& g : inputs) vars.push_back(tape.parameter(g));
  Var<T> out = f(tape, std::span<const Var<T>>(vars));
  ValueAndGrads<T> result{out.value(), {}};
  tape.backward(out);
  for (auto v : vars) result.grads.push_back(tape.grad(v));
  return result;
}

template <class T, class F>
ValueAndGrads<T> record_and_backward(F&& f, const std::vector<BasicGrid<T>>& inputs) {
  return record_and_backward<T>(std::forward<F>(f), std::span<const BasicGrid<T>>(inputs));
}

/// Largest |autodiff - central difference| / (|central difference| + 1e-8)
/// over the checked coordinates of `x` (all of them when `coords` is empty).
///
/// `f(tape, x)` must return a scalar Var. Points where `f` has a kink are not
/// supported: the central difference straddles the kink and the comparison is
/// meaningless there.
template <class T, class F>
double grad_check(F&& f, const BasicGrid<T>& x, double step,
                  std::span<const std::size_t> coords = {}) {
  using A = kernels::Accum<T>;
  auto eval = [&](const BasicGrid<T>& at) {
    Tape<T> tape(false);
    const A v = static_cast<A>(f(tape, tape.constant(at)).value().item());
    if (!std::isfinite(v)) throw NonFiniteError("grad_check: non-finite function value");
    return v;
  };

  Tape<T> tape;
  auto xv = tape.parameter(x);
  auto out = f(tape, xv);
  if (!std::isfinite(static_cast<double>(out.value().item()))) {
    throw NonFiniteError("grad_check: non-finite function value");
  }
  tape.backward(out);
  const auto grad = tape.grad(xv);
  if (!grad.all_finite()) throw NonFiniteError("grad_check: non-finite gradient");

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.numel());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    coords = all;
  }
  double worst = 0.0;
  BasicGrid<T> probe = x;
  for (auto i : coords) {
    const T orig = probe[i];
    probe[i] = static_cast<T>(static_cast<A>(orig) + static_cast<A>(step));
    const A up = eval(probe);
    probe[i] = static_cast<T>(static_cast<A>(orig) - static_cast<A>(step));
    const A down = eval(probe);
    probe[i] = orig;
    const A fd = (up - down) / (2 * static_cast<A>(step));
    const double rel = static_cast<double>(std::abs(static_cast<A>(grad[i]) - fd) / (std::abs(fd) + A(1e-8)));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace diffaug
