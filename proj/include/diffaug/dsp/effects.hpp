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

#include "diffaug/dsp/stft.hpp"
#include "diffaug/dsp/waveform.hpp"
#include "diffaug/numerics/rng.hpp"

namespace diffaug::dsp {

inline constexpr double kDefaultAmbienceWeight = 0.6;

/// Adds a random contiguous segment of `ambience` (same length as x) scaled
/// by `weight`, clamping the result to [-1, 1].
inline Waveform mix_noise(const Waveform& x, const Waveform& ambience, double weight, Rng& rng) {
  if (ambience.sample_rate != x.sample_rate) {
    throw std::invalid_argument("mix_noise: ambience sample rate " + std::to_string(ambience.sample_rate) +
                                " differs from " + std::to_string(x.sample_rate));
  }
  if (ambience.size() < x.size()) {
    throw std::invalid_argument("mix_noise: ambience has " + std::to_string(ambience.size()) +
                                " samples, need at least " + std::to_string(x.size()));
  }
  if (!std::isfinite(weight)) throw std::invalid_argument("mix_noise: weight must be finite");
  const auto offset = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(ambience.size() - x.size())));
  Waveform out = x;
  if (weight == 0.0) return out;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.samples[i] = std::clamp(x.samples[i] + weight * ambience.samples[offset + i], -1.0, 1.0);
  }
  return out;
}

inline double wrap_phase(double p) { return p - 2.0 * M_PI * std::round(p / (2.0 * M_PI)); }

/// Phase-vocoder time stretch. rate > 1 speeds up; the output has
/// round(len / rate) samples and the same pitch.
inline Waveform time_stretch(const Waveform& x, double rate, const StftConfig& c = {}) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw std::invalid_argument("time_stretch: rate must be positive");
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) / rate));
  if (x.samples.empty()) return x;
  const Spectrum in = stft(x.samples, c);
  const std::size_t bins = in.bins(), frames = in.frames.size();
  std::vector<double> advance(bins);
  for (std::size_t k = 0; k < bins; ++k) advance[k] = 2.0 * M_PI * static_cast<double>(k * c.hop) / c.n_fft;

  // frames past the end read as silence
  auto at = [&](std::size_t m, std::size_t k) { return m < frames ? in.frames[m][k] : Complex{}; };

  Spectrum out;
  std::vector<double> phase(bins);
  for (std::size_t k = 0; k < bins; ++k) phase[k] = std::arg(in.frames[0][k]);
  for (double step = 0.0; step < static_cast<double>(frames); step += rate) {
    const auto m = static_cast<std::size_t>(step);
    const double a = step - static_cast<double>(m);
    std::vector<Complex> col(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      const Complex c0 = at(m, k), c1 = at(m + 1, k);
      const double mag = (1.0 - a) * std::abs(c0) + a * std::abs(c1);
      col[k] = std::polar(mag, phase[k]);
      const double dphi = wrap_phase(std::arg(c1) - std::arg(c0) - advance[k]);
      phase[k] += advance[k] + dphi;
    }
    out.frames.push_back(std::move(col));
  }
  return {istft(out, out_len, c), x.sample_rate};
}

/// Multiplies every frequency by `factor` keeping the duration: stretch by
/// 1/factor, then resample back to the original length.
inline Waveform pitch_shift(const Waveform& x, double factor, const StftConfig& c = {}) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw std::invalid_argument("pitch_shift: factor must be positive");
  if (factor == 1.0 || x.samples.empty()) return x;
  const Waveform stretched = time_stretch(x, 1.0 / factor, c);
  Waveform out{resample_linear(stretched.samples, x.size()), x.sample_rate};
  for (auto& v : out.samples) v = std::clamp(v, -1.0, 1.0);
  return out;
}

}  // namespace diffaug::dsp
