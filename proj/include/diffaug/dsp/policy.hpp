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

// Stochastic traditional augmentation: each transform fires with its own
// probability, then the selection is cut down to at most two (never both
// pitch directions) or padded up to one.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/dsp/effects.hpp"
#include "diffaug/dsp/waveform.hpp"
#include "diffaug/numerics/rng.hpp"

namespace diffaug::dsp {

enum class Transform { noise, pitch_up, pitch_down, stretch };

inline constexpr std::array<Transform, 4> kTransforms{Transform::noise, Transform::pitch_up, Transform::pitch_down,
                                                      Transform::stretch};

inline const char* transform_name(Transform t) {
  switch (t) {
    case Transform::noise: return "noise";
    case Transform::pitch_up: return "pitch_up";
    case Transform::pitch_down: return "pitch_down";
    case Transform::stretch: return "stretch";
  }
  return "?";
}

struct AugmentPolicy {
  double p_noise = 0.6;
  double p_pitch_up = 0.8;
  double p_pitch_down = 0.8;
  double p_stretch = 0.7;
  double noise_weight = kDefaultAmbienceWeight;
  double pitch_factor = 2.0;
  double min_rate = 0.8;
  double max_rate = 1.25;
  std::size_t min_transforms = 1;
  std::size_t max_transforms = 2;

  double probability(Transform t) const {
    switch (t) {
      case Transform::noise: return p_noise;
      case Transform::pitch_up: return p_pitch_up;
      case Transform::pitch_down: return p_pitch_down;
      case Transform::stretch: return p_stretch;
    }
    return 0.0;
  }

  void validate() const {
    for (auto t : kTransforms) {
      const double p = probability(t);
      if (!(p >= 0.0 && p <= 1.0)) {
        throw std::invalid_argument(std::string("augment policy: probability of ") + transform_name(t) +
                                    " must be in [0, 1]");
      }
    }
    if (!(pitch_factor > 0.0)) throw std::invalid_argument("augment policy: pitch factor must be positive");
    if (!(min_rate > 0.0 && min_rate <= max_rate)) throw std::invalid_argument("augment policy: need 0 < min_rate <= max_rate");
    if (min_transforms > max_transforms || max_transforms == 0) {
      throw std::invalid_argument("augment policy: need 1 <= min_transforms <= max_transforms");
    }
    // with the exclusivity rule at most three transforms can ever be kept
    if (min_transforms > kTransforms.size() - 1) throw std::invalid_argument("augment policy: min_transforms too large");
  }
};

/// Which transforms to apply, in declaration order.
inline std::vector<Transform> choose_transforms(const AugmentPolicy& p, Rng& rng) {
  std::vector<Transform> picked;
  for (auto t : kTransforms) {
    if (rng.uniform() < p.probability(t)) picked.push_back(t);
  }
  const bool up = std::find(picked.begin(), picked.end(), Transform::pitch_up) != picked.end();
  const bool down = std::find(picked.begin(), picked.end(), Transform::pitch_down) != picked.end();
  if (up && down) {
    const Transform drop = rng.uniform() < 0.5 ? Transform::pitch_up : Transform::pitch_down;
    picked.erase(std::find(picked.begin(), picked.end(), drop));
  }
  while (picked.size() > p.max_transforms) {
    picked.erase(picked.begin() + rng.integer(0, static_cast<std::int64_t>(picked.size()) - 1));
  }
  while (picked.size() < p.min_transforms) {
    std::vector<Transform> candidates;
    for (auto t : kTransforms) {
      if (std::find(picked.begin(), picked.end(), t) != picked.end()) continue;
      const bool clash = (t == Transform::pitch_up &&
                          std::find(picked.begin(), picked.end(), Transform::pitch_down) != picked.end()) ||
                         (t == Transform::pitch_down &&
                          std::find(picked.begin(), picked.end(), Transform::pitch_up) != picked.end());
      if (!clash) candidates.push_back(t);
    }
    picked.push_back(candidates[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(candidates.size()) - 1))]);
    std::sort(picked.begin(), picked.end());
  }
  return picked;
}

struct PolicyOutcome {
  Waveform audio;
  std::vector<Transform> applied;
  double stretch_rate = 1.0;
};

/// Draws transforms and applies them in declaration order. `ambience` is
/// only needed when the noise transform can fire.
inline PolicyOutcome apply_policy(const Waveform& x, const AugmentPolicy& p, Rng& rng,
                                  std::span<const Waveform> ambience = {}, const StftConfig& stft = {}) {
  p.validate();
  PolicyOutcome out{x, choose_transforms(p, rng), 1.0};
  for (auto t : out.applied) {
    switch (t) {
      case Transform::noise: {
        if (ambience.empty()) throw std::invalid_argument("apply_policy: noise transform needs ambience recordings");
        const auto& src = ambience[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(ambience.size()) - 1))];
        out.audio = mix_noise(out.audio, src, p.noise_weight, rng);
        break;
      }
      case Transform::pitch_up: out.audio = pitch_shift(out.audio, p.pitch_factor, stft); break;
      case Transform::pitch_down: out.audio = pitch_shift(out.audio, 1.0 / p.pitch_factor, stft); break;
      case Transform::stretch:
        out.stretch_rate = rng.uniform(p.min_rate, p.max_rate);
        out.audio = time_stretch(out.audio, out.stretch_rate, stft);
        break;
    }
  }
  return out;
}

enum class AmbienceKind { traffic, hum, crowd };

/// Filtered-noise stand-ins for city ambience recordings, peak 0.5:
/// traffic is low-passed noise, hum a 60 Hz series buried in light noise,
/// crowd band-passed noise.
inline Waveform synth_ambience(AmbienceKind kind, double seconds, std::uint64_t seed,
                               double sample_rate = kDefaultSampleRate) {
  Rng rng(seed, static_cast<std::uint64_t>(kind) + 0xa3b1);
  Waveform w{std::vector<double>(static_cast<std::size_t>(std::llround(seconds * sample_rate))), sample_rate};
  double lp1 = 0.0, lp2 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double e = rng.normal();
    const double t = static_cast<double>(i) / sample_rate;
    switch (kind) {
      case AmbienceKind::traffic:
        lp1 += 0.02 * (e - lp1);
        w.samples[i] = lp1;
        break;
      case AmbienceKind::hum:
        w.samples[i] = std::sin(2 * M_PI * 60 * t) + 0.5 * std::sin(2 * M_PI * 120 * t) +
                       0.25 * std::sin(2 * M_PI * 180 * t) + 0.1 * e;
        break;
      case AmbienceKind::crowd:
        // difference of two one-pole low-passes
        lp1 += 0.3 * (e - lp1);
        lp2 += 0.05 * (e - lp2);
        w.samples[i] = lp1 - lp2;
        break;
    }
  }
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : w.samples) v *= 0.5 / peak;
  return w;
}

}  // namespace diffaug::dsp
