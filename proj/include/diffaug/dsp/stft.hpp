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

// Short-time Fourier transform on top of FFTW. Frames are centred: the
// signal is zero-padded by n_fft/2 on both sides, so frame m covers samples
// around m*hop.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <vector>

namespace diffaug::dsp {

using Complex = std::complex<double>;

struct StftConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;

  void validate() const {
    if (n_fft < 2 || n_fft % 2 != 0) throw std::invalid_argument("stft: n_fft must be even and >= 2");
    if (hop == 0 || hop > n_fft) throw std::invalid_argument("stft: hop must be in [1, n_fft]");
  }
  std::size_t bins() const { return n_fft / 2 + 1; }
};

/// Periodic Hann window.
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / n);
  return w;
}

/// Real-to-complex FFT of a fixed size with its own buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n), in_(n), out_(n / 2 + 1) {
    auto* out = reinterpret_cast<fftw_complex*>(out_.data());
    fwd_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.data(), out, FFTW_ESTIMATE));
    inv_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), out, in_.data(), FFTW_ESTIMATE));
    if (!fwd_ || !inv_) throw std::runtime_error("fftw: plan creation failed");
  }

  std::size_t size() const { return n_; }
  std::vector<double>& time() { return in_; }
  std::vector<Complex>& freq() { return out_; }

  void forward() { fftw_execute(fwd_.get()); }
  /// Unnormalised inverse: overwrites time() with n times the signal.
  void inverse() { fftw_execute(inv_.get()); }

 private:
  struct PlanDeleter {
    void operator()(fftw_plan p) const { fftw_destroy_plan(p); }
  };
  std::size_t n_;
  std::vector<double> in_;
  std::vector<Complex> out_;
  std::unique_ptr<std::remove_pointer_t<fftw_plan>, PlanDeleter> fwd_, inv_;
};

/// Complex spectrogram, frame-major: frames[m][k].
struct Spectrum {
  std::vector<std::vector<Complex>> frames;
  std::size_t bins() const { return frames.empty() ? 0 : frames[0].size(); }
};

inline std::size_t num_frames(std::size_t len, std::size_t hop) { return 1 + len / hop; }

inline Spectrum stft(const std::vector<double>& x, const StftConfig& c = {}) {
  c.validate();
  const auto win = hann(c.n_fft);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(c.n_fft / 2);
  RealFft fft(c.n_fft);
  Spectrum s;
  const std::size_t m_count = num_frames(x.size(), c.hop);
  s.frames.reserve(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m * c.hop) - pad;
    for (std::size_t i = 0; i < c.n_fft; ++i) {
      const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(i);
      fft.time()[i] = (j >= 0 && j < static_cast<std::ptrdiff_t>(x.size())) ? x[static_cast<std::size_t>(j)] * win[i] : 0.0;
    }
    fft.forward();
    s.frames.push_back(fft.freq());
  }
  return s;
}

/// Weighted overlap-add inverse of stft(), trimmed or zero-extended to
/// `length` samples.
inline std::vector<double> istft(const Spectrum& s, std::size_t length, const StftConfig& c = {}) {
  c.validate();
  if (!s.frames.empty() && s.bins() != c.bins()) throw std::invalid_argument("istft: bin count does not match n_fft");
  const auto win = hann(c.n_fft);
  const std::size_t pad = c.n_fft / 2;
  const std::size_t total = s.frames.empty() ? 0 : (s.frames.size() - 1) * c.hop + c.n_fft;
  std::vector<double> acc(total, 0.0), wsum(total, 0.0);
  RealFft fft(c.n_fft);
  const double scale = 1.0 / static_cast<double>(c.n_fft);
  for (std::size_t m = 0; m < s.frames.size(); ++m) {
    fft.freq() = s.frames[m];
    fft.inverse();
    for (std::size_t i = 0; i < c.n_fft; ++i) {
      acc[m * c.hop + i] += fft.time()[i] * scale * win[i];
      wsum[m * c.hop + i] += win[i] * win[i];
    }
  }
  std::vector<double> out(length, 0.0);
  for (std::size_t n = 0; n < length && n + pad < total; ++n) {
    const double w = wsum[n + pad];
    if (w > 1e-10) out[n] = acc[n + pad] / w;
  }
  return out;
}

}  // namespace diffaug::dsp
