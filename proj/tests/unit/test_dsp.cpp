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


#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "diffaug/dsp/effects.hpp"
#include "diffaug/dsp/mel.hpp"
#include "diffaug/dsp/policy.hpp"
#include "diffaug/dsp/stft.hpp"
#include "oracles.hpp"

using namespace diffaug;
using namespace diffaug::dsp;
using Catch::Approx;

namespace {

constexpr double kSr = kDefaultSampleRate;

double peak(const Waveform& w, double lo = 100.0, double hi = 2000.0) {
  // skip the edges, where the vocoder frames are only partly filled
  const std::size_t cut = std::min<std::size_t>(1024, w.size() / 8);
  std::vector<double> mid(w.samples.begin() + static_cast<std::ptrdiff_t>(cut),
                          w.samples.end() - static_cast<std::ptrdiff_t>(cut));
  return oracle::dft_peak_hz(mid, w.sample_rate, lo, hi);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("stft and istft reconstruct the signal", "[dsp]") {
  Rng rng(1);
  std::vector<double> x(5000);
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  const auto s = stft(x);
  CHECK(s.frames.size() == num_frames(x.size(), 256));
  CHECK(s.bins() == 513);
  const auto y = istft(s, x.size());
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
  CHECK(err < 1e-9);
  CHECK_THROWS_AS(stft(x, StftConfig{1023, 256}), std::invalid_argument);
  CHECK_THROWS_AS(stft(x, StftConfig{1024, 0}), std::invalid_argument);
}

TEST_CASE("stft bin of a pure tone", "[dsp]") {
  // 43 * sr / 1024 lands exactly on bin 43
  const auto w = sine(43.0 * kSr / 1024.0, 0.5);
  const auto s = stft(w.samples);
  const auto& f = s.frames[s.frames.size() / 2];
  std::size_t arg = 0;
  for (std::size_t k = 0; k < f.size(); ++k)
    if (std::abs(f[k]) > std::abs(f[arg])) arg = k;
  CHECK(arg == 43);
}

TEST_CASE("mix_noise", "[dsp]") {
  const auto x = sine(440, 0.25);
  const auto amb = synth_ambience(AmbienceKind::traffic, 1.0, 3);
  Rng r0(9);
  CHECK(mix_noise(x, amb, 0.0, r0).samples == x.samples);
  Rng r1(9), r2(9);
  const auto a = mix_noise(x, amb, kDefaultAmbienceWeight, r1);
  const auto b = mix_noise(x, amb, kDefaultAmbienceWeight, r2);
  CHECK(a.samples == b.samples);
  CHECK(a.size() == x.size());
  CHECK(kDefaultAmbienceWeight == 0.6);
  for (double v : a.samples) CHECK(std::abs(v) <= 1.0);
  // the added part is 0.6 times a contiguous piece of the ambience
  std::size_t offset = amb.size();
  for (std::size_t o = 0; o + x.size() <= amb.size(); ++o) {
    if (std::abs(a.samples[0] - x.samples[0] - 0.6 * amb.samples[o]) < 1e-12 &&
        std::abs(a.samples[100] - x.samples[100] - 0.6 * amb.samples[o + 100]) < 1e-12) {
      offset = o;
      break;
    }
  }
  REQUIRE(offset < amb.size());
  for (std::size_t i = 0; i < x.size(); i += 37) {
    CHECK(a.samples[i] == Approx(std::clamp(x.samples[i] + 0.6 * amb.samples[offset + i], -1.0, 1.0)).margin(1e-12));
  }
  // loud inputs get clamped
  Waveform loud{std::vector<double>(100, 0.95), kSr};
  Rng r3(1);
  for (double v : mix_noise(loud, synth_ambience(AmbienceKind::hum, 0.1, 1), 1.0, r3).samples) CHECK(v <= 1.0);
  Rng r4(1);
  CHECK_THROWS_AS(mix_noise(amb, x, 0.6, r4), std::invalid_argument);
  CHECK_THROWS_AS(mix_noise(x, resample(amb, 16000), 0.6, r4), std::invalid_argument);
}

TEST_CASE("time_stretch duration and pitch", "[dsp]") {
  const auto x = sine(440, 1.0);
  SECTION("rate 1 is the identity up to rounding") {
    const auto y = time_stretch(x, 1.0);
    REQUIRE(y.size() == x.size());
    CHECK(correlation(x.samples, y.samples) > 0.9999);
  }
  SECTION("rate 1.25 shortens to 0.8x and keeps the peak") {
    const auto y = time_stretch(x, 1.25);
    CHECK(std::abs(static_cast<double>(y.size()) - 0.8 * x.size()) <= 256);
    CHECK(peak(y) == Approx(440).epsilon(0.03));
  }
  SECTION("rate 0.8 keeps the peak") {
    const auto y = time_stretch(x, 0.8);
    CHECK(std::abs(static_cast<double>(y.size()) - 1.25 * x.size()) <= 256);
    CHECK(peak(y) == Approx(440).epsilon(0.03));
  }
  SECTION("duration contract across rates") {
    for (double rate = 0.5; rate <= 2.0001; rate += 0.125) {
      const auto y = time_stretch(x, rate);
      CHECK(std::abs(static_cast<double>(y.size()) - x.size() / rate) <= 256);
    }
  }
  CHECK_THROWS_AS(time_stretch(x, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(time_stretch(x, -1.0), std::invalid_argument);
}

TEST_CASE("pitch_shift", "[dsp]") {
  const auto x = sine(440, 1.0);
  const auto up = pitch_shift(x, 2.0);
  CHECK(up.size() == x.size());
  CHECK(peak(up) == Approx(880).epsilon(0.03));
  const auto down = pitch_shift(x, 0.5);
  CHECK(down.size() == x.size());
  CHECK(peak(down) == Approx(220).epsilon(0.03));
  const auto back = pitch_shift(up, 0.5);
  CHECK(peak(back) == Approx(440).epsilon(0.03));
  CHECK(correlation(pitch_shift(x, 1.0).samples, x.samples) > 0.99);
  CHECK_THROWS_AS(pitch_shift(x, 0.0), std::invalid_argument);
}

TEST_CASE("mel filterbank", "[dsp]") {
  const auto fb = mel_filterbank(128, 1024, kSr, 20.0, kSr / 2);
  REQUIRE(fb.size() == 128);
  CHECK(hz_to_mel(1000.0) == Approx(1000.0).epsilon(1e-3));
  CHECK(mel_to_hz(hz_to_mel(3210.0)) == Approx(3210.0));
  for (const auto& row : fb) {
    CHECK(*std::max_element(row.begin(), row.end()) <= 1.0);
    CHECK(*std::max_element(row.begin(), row.end()) > 0.0);
  }
  CHECK_THROWS_AS(mel_filterbank(128, 1024, kSr, 20.0, kSr), std::invalid_argument);
}

TEST_CASE("featurize", "[dsp]") {
  SECTION("silence maps to -1") {
    const auto g = featurize(Waveform{std::vector<double>(5000, 0.0), kSr});
    REQUIRE(g.shape() == Shape{128, 128});
    for (float v : g.data()) CHECK(v == -1.0f);
  }
  SECTION("shape is fixed for any length of at least one hop") {
    for (std::size_t n : {256u, 1000u, 22050u, 100000u}) {
      Rng rng(n);
      Waveform w{std::vector<double>(n), kSr};
      for (auto& v : w.samples) v = rng.uniform(-0.3, 0.3);
      const auto g = featurize(w);
      CHECK(g.shape() == Shape{128, 128});
      CHECK(*std::min_element(g.data().begin(), g.data().end()) >= -1.0f);
      CHECK(*std::max_element(g.data().begin(), g.data().end()) <= 1.0f);
      CHECK(*std::max_element(g.data().begin(), g.data().end()) > 0.9f);
    }
  }
  SECTION("1 kHz tone concentrates in three adjacent bands") {
    const auto mel = mel_spectrogram(sine(1000, 1.0));
    std::vector<double> energy(mel.size(), 0.0);
    double total = 0.0;
    for (std::size_t b = 0; b < mel.size(); ++b) {
      for (double v : mel[b]) energy[b] += v * v;
      total += energy[b];
    }
    double best = 0.0;
    std::size_t at = 0;
    for (std::size_t b = 0; b + 2 < energy.size(); ++b) {
      const double e = energy[b] + energy[b + 1] + energy[b + 2];
      if (e > best) {
        best = e;
        at = b;
      }
    }
    INFO("band " << at << " share " << best / total);
    CHECK(best / total > 0.6);
    // and the hottest feature row sits there too
    const auto g = featurize(sine(1000, 1.0));
    std::size_t hot = 0;
    double hot_sum = -1e9;
    for (std::size_t b = 0; b < 128; ++b) {
      double s = 0.0;
      for (std::size_t q = 0; q < 128; ++q) s += g[b * 128 + q];
      if (s > hot_sum) {
        hot_sum = s;
        hot = b;
      }
    }
    CHECK(hot >= at);
    CHECK(hot <= at + 2);
  }
  CHECK_THROWS_AS(featurize(Waveform{{}, kSr}), std::invalid_argument);
  CHECK_THROWS_AS(featurize(Waveform{std::vector<double>(1000, 0.0), 16000}), std::invalid_argument);
}

TEST_CASE("policy defaults", "[dsp]") {
  const AugmentPolicy p;
  CHECK(p.p_noise == 0.6);
  CHECK(p.p_pitch_up == 0.8);
  CHECK(p.p_pitch_down == 0.8);
  CHECK(p.p_stretch == 0.7);
  CHECK(p.noise_weight == 0.6);
  CHECK(p.pitch_factor == 2.0);
  CHECK(p.min_rate == 0.8);
  CHECK(p.max_rate == 1.25);
}

TEST_CASE("policy bounds", "[dsp]") {
  AugmentPolicy none;
  none.p_noise = none.p_pitch_up = none.p_pitch_down = none.p_stretch = 0.0;
  AugmentPolicy all;
  all.p_noise = all.p_pitch_up = all.p_pitch_down = all.p_stretch = 1.0;
  const AugmentPolicy table;
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    CHECK(choose_transforms(none, rng).size() == 1);
    const auto a = choose_transforms(all, rng);
    CHECK(a.size() == 2);
    const auto t = choose_transforms(table, rng);
    const bool ok = t.size() >= 1 && t.size() <= 2 &&
                    !(std::count(t.begin(), t.end(), Transform::pitch_up) &&
                      std::count(t.begin(), t.end(), Transform::pitch_down)) &&
                    !(std::count(a.begin(), a.end(), Transform::pitch_up) &&
                      std::count(a.begin(), a.end(), Transform::pitch_down)) &&
                    std::is_sorted(t.begin(), t.end());
    if (!ok) FAIL("draw " << i << " broke the policy rules");
  }
  AugmentPolicy bad;
  bad.p_noise = 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("policy application rates match exact enumeration", "[dsp]") {
  const AugmentPolicy p;
  // Exact law of the rule: enumerate the 16 Bernoulli outcomes, then the
  // uniform tie-breaks.
  std::map<Transform, double> expect;
  for (int mask = 0; mask < 16; ++mask) {
    double prob = 1.0;
    std::vector<Transform> s;
    for (int j = 0; j < 4; ++j) {
      const double pj = p.probability(kTransforms[j]);
      if (mask >> j & 1) {
        prob *= pj;
        s.push_back(kTransforms[j]);
      } else {
        prob *= 1.0 - pj;
      }
    }
    // each entry: (weight, set)
    std::vector<std::pair<double, std::vector<Transform>>> cases{{1.0, s}};
    if ((mask & 6) == 6) {
      auto drop_up = s, drop_down = s;
      drop_up.erase(std::find(drop_up.begin(), drop_up.end(), Transform::pitch_up));
      drop_down.erase(std::find(drop_down.begin(), drop_down.end(), Transform::pitch_down));
      cases = {{0.5, drop_up}, {0.5, drop_down}};
    }
    for (auto& [w, set] : cases) {
      if (set.empty()) {
        for (auto t : kTransforms) expect[t] += prob * w / 4.0;
      } else if (set.size() == 3) {
        // keep two of three: each member survives with probability 2/3
        for (auto t : set) expect[t] += prob * w * 2.0 / 3.0;
      } else {
        for (auto t : set) expect[t] += prob * w;
      }
    }
  }
  std::map<Transform, int> seen;
  // 1e4 draws put the 1% band at about two standard deviations; 1e6 keeps
  // the comparison about the rule rather than about sampling noise.
  Rng rng(2024);
  const int n = 1000000;
  for (int i = 0; i < n; ++i)
    for (auto t : choose_transforms(p, rng)) ++seen[t];
  for (auto t : kTransforms) {
    INFO(transform_name(t) << " expected " << expect[t]);
    CHECK(std::abs(seen[t] / static_cast<double>(n) - expect[t]) < 0.01);
  }
}

TEST_CASE("apply_policy", "[dsp]") {
  const auto x = sine(440, 0.5);
  const std::vector<Waveform> amb{synth_ambience(AmbienceKind::traffic, 2.0, 1),
                                  synth_ambience(AmbienceKind::hum, 2.0, 2),
                                  synth_ambience(AmbienceKind::crowd, 2.0, 3)};
  AugmentPolicy p;
  for (int seed = 0; seed < 20; ++seed) {
    Rng a(seed), b(seed);
    const auto ra = apply_policy(x, p, a, amb);
    const auto rb = apply_policy(x, p, b, amb);
    CHECK(ra.audio.samples == rb.audio.samples);
    CHECK(ra.applied.size() >= 1);
    CHECK(ra.applied.size() <= 2);
    const bool stretched = std::count(ra.applied.begin(), ra.applied.end(), Transform::stretch) > 0;
    if (stretched) {
      CHECK(ra.stretch_rate >= 0.8);
      CHECK(ra.stretch_rate <= 1.25);
      CHECK(std::abs(static_cast<double>(ra.audio.size()) - x.size() / ra.stretch_rate) <= 1.0);
    } else {
      CHECK(ra.audio.size() == x.size());
    }
    for (double v : ra.audio.samples) REQUIRE(std::abs(v) <= 1.0);
  }
  AugmentPolicy noise_only;
  noise_only.p_noise = 1.0;
  noise_only.p_pitch_up = noise_only.p_pitch_down = noise_only.p_stretch = 0.0;
  Rng r(1);
  CHECK_THROWS_AS(apply_policy(x, noise_only, r), std::invalid_argument);
}

TEST_CASE("synthetic ambience", "[dsp]") {
  for (auto k : {AmbienceKind::traffic, AmbienceKind::hum, AmbienceKind::crowd}) {
    const auto w = synth_ambience(k, 1.0, 7);
    CHECK(w.size() == 22050);
    double pk = 0.0;
    for (double v : w.samples) pk = std::max(pk, std::abs(v));
    CHECK(pk == Approx(0.5));
    CHECK(synth_ambience(k, 1.0, 7).samples == w.samples);
  }
}

TEST_CASE("linear resampling", "[dsp]") {
  const auto x = sine(440, 0.5);
  const auto y = resample(x, 16000);
  CHECK(y.sample_rate == 16000);
  CHECK(y.size() == 8000);
  CHECK(oracle::dft_peak_hz(y.samples, 16000, 300, 600) == Approx(440).margin(2));
  CHECK(resample_linear({1.0, 3.0}, 4) == std::vector<double>{1.0, 1.5, 2.5, 3.0});
}
