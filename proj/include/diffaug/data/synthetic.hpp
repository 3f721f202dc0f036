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

// Synthetic "spectrogram" datasets of Gaussian blobs. Class c places its blob
// in its own frequency band (row range) with a class-specific shape; the
// time position (column), amplitude and background noise vary per example.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "diffaug/diffusion.hpp"
#include "diffaug/numerics/rng.hpp"

namespace diffaug {

struct BlobDatasetConfig {
  int num_classes = 3;
  int per_class = 32;
  std::size_t height = 32;
  std::size_t width = 32;
  int folds = 5;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

namespace detail {
struct Blob {
  double row, col, sr, sc;
};
}  // namespace detail

/// Values in [-1, 1], shape [1, H, W]. Folds 1..folds are assigned round-robin
/// per class.
template <class T = float>
std::vector<LabeledSample<T>> make_blob_dataset(const BlobDatasetConfig& c) {
  if (c.num_classes < 1 || c.per_class < 1 || c.folds < 1 || c.height < 4 || c.width < 4) {
    throw std::invalid_argument("blob dataset: invalid configuration");
  }
  std::vector<LabeledSample<T>> out;
  out.reserve(static_cast<std::size_t>(c.num_classes * c.per_class));
  const double H = static_cast<double>(c.height), W = static_cast<double>(c.width);
  const double band = H / c.num_classes;
  for (int k = 0; k < c.num_classes; ++k) {
    for (int i = 0; i < c.per_class; ++i) {
      Rng rng(c.seed, static_cast<std::uint64_t>(k) * 1000003u + static_cast<std::uint64_t>(i));
      const double row = band * (k + 0.5) + rng.uniform(-0.15, 0.15) * band;
      const double col = rng.uniform(0.25, 0.75) * W;
      const double amp = rng.uniform(0.7, 1.0);
      // Shape by class (cycling): a ridge along time (tonal), a ridge along
      // frequency (transient), or a pair of small spots.
      std::vector<detail::Blob> blobs;
      switch (k % 3) {
        case 0: blobs = {{row, col, std::max(1.0, band / 6.0), W / 4.0}}; break;
        case 1: blobs = {{row, col, std::max(1.5, band / 2.0), std::max(1.0, W / 24.0)}}; break;
        default: {
          const double gap = W / 6.0;
          const double r = std::max(1.0, band / 6.0);
          blobs = {{row, col - gap / 2, r, r}, {row, col + gap / 2, r, r}};
        }
      }
      BasicGrid<T> g({1, c.height, c.width});
      for (std::size_t r = 0; r < c.height; ++r) {
        for (std::size_t q = 0; q < c.width; ++q) {
          double bump = 0.0;
          for (const auto& b : blobs) {
            const double dr = (static_cast<double>(r) - b.row) / b.sr, dq = (static_cast<double>(q) - b.col) / b.sc;
            bump = std::max(bump, std::exp(-0.5 * (dr * dr + dq * dq)));
          }
          const double v = -1.0 + 2.0 * amp * bump + c.noise * rng.normal();
          g[r * c.width + q] = static_cast<T>(std::clamp(v, -1.0, 1.0));
        }
      }
      out.push_back({std::move(g), k, 1 + i % c.folds});
    }
  }
  return out;
}

}  // namespace diffaug
