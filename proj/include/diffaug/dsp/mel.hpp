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

// Log-mel features. Rows are mel bands (row 0 lowest), columns are time.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/dsp/stft.hpp"
#include "diffaug/dsp/waveform.hpp"
#include "diffaug/numerics/grid.hpp"

namespace diffaug::dsp {

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters with unit peak, centres equally spaced on the HTK
/// mel scale. weights[b][k] for FFT bin k.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t n_mels, std::size_t n_fft, double sample_rate,
                                                       double fmin, double fmax) {
  if (n_mels == 0 || !(fmin >= 0.0) || !(fmax > fmin) || fmax > sample_rate / 2.0 + 1e-9) {
    throw std::invalid_argument("mel_filterbank: need 0 <= fmin < fmax <= Nyquist and n_mels >= 1");
  }
  const std::size_t bins = n_fft / 2 + 1;
  const double m0 = hz_to_mel(fmin), m1 = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(m0 + (m1 - m0) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  std::vector<std::vector<double>> w(n_mels, std::vector<double>(bins, 0.0));
  for (std::size_t b = 0; b < n_mels; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      const double up = (f - lo) / (mid - lo), down = (hi - f) / (hi - mid);
      w[b][k] = std::max(0.0, std::min(up, down));
    }
  }
  return w;
}

struct FeatureConfig {
  StftConfig stft;
  std::size_t n_mels = 128;
  std::size_t frames = 128;
  double fmin = 20.0;
  double fmax = 0.0;  // 0 means Nyquist
  double floor = 1e-3;
  double sample_rate = kDefaultSampleRate;

  double resolved_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
};

/// Mel magnitude, [n_mels][frames].
inline std::vector<std::vector<double>> mel_spectrogram(const Waveform& x, const FeatureConfig& c = {}) {
  if (x.sample_rate != c.sample_rate) {
    throw std::invalid_argument("featurize: waveform is at " + std::to_string(x.sample_rate) + " Hz, expected " +
                                std::to_string(c.sample_rate));
  }
  const auto fb = mel_filterbank(c.n_mels, c.stft.n_fft, c.sample_rate, c.fmin, c.resolved_fmax());
  const Spectrum s = stft(x.samples, c.stft);
  std::vector<std::vector<double>> mel(c.n_mels, std::vector<double>(s.frames.size(), 0.0));
  for (std::size_t m = 0; m < s.frames.size(); ++m) {
    for (std::size_t b = 0; b < c.n_mels; ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < fb[b].size(); ++k) {
        if (fb[b][k] != 0.0) acc += fb[b][k] * std::abs(s.frames[m][k]);
      }
      mel[b][m] = acc;
    }
  }
  return mel;
}

/// log(1 + S/floor), min-max scaled to [-1, 1], time axis linearly resized
/// to c.frames columns. Silence maps to a constant -1.
template <class T = float>
BasicGrid<T> featurize(const Waveform& x, const FeatureConfig& c = {}) {
  if (x.samples.empty()) throw std::invalid_argument("featurize: empty waveform");
  if (!(c.floor > 0.0) || c.frames == 0) throw std::invalid_argument("featurize: floor and frames must be positive");
  x.validate("featurize");
  auto mel = mel_spectrogram(x, c);
  double lo = INFINITY, hi = -INFINITY;
  for (auto& row : mel) {
    for (auto& v : row) {
      v = std::log1p(v / c.floor);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const std::size_t in_frames = mel[0].size();
  BasicGrid<T> out({c.n_mels, c.frames}, std::vector<T>(c.n_mels * c.frames, T(-1)));
  if (!(hi - lo > 1e-12)) return out;
  const double ratio = static_cast<double>(in_frames) / static_cast<double>(c.frames);
  for (std::size_t q = 0; q < c.frames; ++q) {
    const double src = std::clamp((static_cast<double>(q) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(in_frames - 1));
    const auto m0 = static_cast<std::size_t>(src);
    const std::size_t m1 = std::min(m0 + 1, in_frames - 1);
    const double a = src - static_cast<double>(m0);
    for (std::size_t b = 0; b < c.n_mels; ++b) {
      const double v = (1.0 - a) * mel[b][m0] + a * mel[b][m1];
      out[b * c.frames + q] = static_cast<T>(std::clamp(2.0 * (v - lo) / (hi - lo) - 1.0, -1.0, 1.0));
    }
  }
  return out;
}

}  // namespace diffaug::dsp
