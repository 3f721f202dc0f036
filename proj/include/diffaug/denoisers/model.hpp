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

#include <concepts>
#include <optional>
#include <span>
#include <vector>

#include "diffaug/numerics/grid.hpp"

namespace diffaug {

/// Conditioning label; nullopt selects the unconditional branch.
using ClassLabel = std::optional<int>;

/// An epsilon-prediction model. `x` is a batch [N, ...] and `labels` holds
/// one entry per sample, or is empty for an all-unconditional batch. The
/// output has the shape of `x`.
template <class M, class T>
concept EpsilonModel = requires(const M& m, const BasicGrid<T>& x, double t,
                                std::span<const ClassLabel> labels) {
  { m.predict(x, t, labels) } -> std::convertible_to<BasicGrid<T>>;
};

inline ClassLabel label_for(std::span<const ClassLabel> labels, std::size_t i) {
  return labels.empty() ? ClassLabel{} : labels[i];
}

}  // namespace diffaug
