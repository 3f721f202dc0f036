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
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/error.hpp"

namespace diffaug::dsp {

inline constexpr double kDefaultSampleRate = 22050.0;

struct Waveform {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate(const char* where = "waveform") const {
    if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
      throw std::invalid_argument(std::string(where) + ": sample rate must be positive");
    }
    for (double v : samples) {
      if (!std::isfinite(v)) throw NonFiniteError(std::string(where) + ": non-finite sample");
    }
  }
};

/// Linear interpolation onto `out_len` points spanning the same duration,
/// using sample-centre alignment.
inline std::vector<double> resample_linear(const std::vector<double>& x, std::size_t out_len) {
  std::vector<double> out(out_len, 0.0);
  if (x.empty() || out_len == 0) return out;
  if (x.size() == out_len) return x;
  const double ratio = static_cast<double>(x.size()) / static_cast<double>(out_len);
  const double last = static_cast<double>(x.size() - 1);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double src = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, last);
    const auto i0 = static_cast<std::size_t>(src);
    const std::size_t i1 = std::min(i0 + 1, x.size() - 1);
    const double a = src - static_cast<double>(i0);
    out[i] = (1.0 - a) * x[i0] + a * x[i1];
  }
  return out;
}

inline Waveform resample(const Waveform& w, double new_rate) {
  if (!(new_rate > 0.0)) throw std::invalid_argument("resample: target rate must be positive");
  if (new_rate == w.sample_rate) return w;
  const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(w.size()) * new_rate / w.sample_rate));
  return {resample_linear(w.samples, n), new_rate};
}

inline Waveform sine(double freq, double seconds, double sample_rate = kDefaultSampleRate, double amp = 0.5) {
  Waveform w{std::vector<double>(static_cast<std::size_t>(std::llround(seconds * sample_rate))), sample_rate};
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.samples[i] = amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / sample_rate);
  }
  return w;
}

}  // namespace diffaug::dsp
