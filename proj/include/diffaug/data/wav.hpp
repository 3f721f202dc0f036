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

// RIFF/WAVE reading and writing. Integer PCM at 8, 16, 24 and 32 bits and
// IEEE float32 are decoded, including WAVE_FORMAT_EXTENSIBLE wrappers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diffaug/data/bytes.hpp"
#include "diffaug/dsp/waveform.hpp"
#include "diffaug/error.hpp"

namespace diffaug::io {

struct WavData {
  std::uint16_t channels = 1;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 16;
  bool is_float = false;
  std::vector<double> interleaved;  // frames * channels, in [-1, 1]

  std::size_t frames() const { return channels ? interleaved.size() / channels : 0; }
};

namespace detail {

inline constexpr std::uint16_t kPcm = 1;
inline constexpr std::uint16_t kFloat = 3;
inline constexpr std::uint16_t kExtensible = 0xfffe;

inline double decode_sample(const std::uint8_t* p, std::uint16_t bits, bool is_float) {
  if (is_float) {
    std::uint32_t u = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return static_cast<double>(std::bit_cast<float>(u));
  }
  switch (bits) {
    case 8: return (static_cast<double>(p[0]) - 128.0) / 128.0;
    case 16: return static_cast<double>(static_cast<std::int16_t>(p[0] | (p[1] << 8))) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return static_cast<double>(v) / 8388608.0;
    }
    default: {
      const auto u = static_cast<std::uint32_t>(p[0] | (p[1] << 8) | (p[2] << 16)) | (static_cast<std::uint32_t>(p[3]) << 24);
      return static_cast<double>(static_cast<std::int32_t>(u)) / 2147483648.0;
    }
  }
}

}  // namespace detail

inline WavData decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.tag("RIFF tag") != "RIFF") throw FormatError("not a RIFF file", 0);
  const std::uint32_t riff_size = r.u32("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw FormatError("RIFF file is not WAVE", 8);
  if (static_cast<std::uint64_t>(riff_size) + 8 > bytes.size()) {
    throw FormatError("RIFF size " + std::to_string(riff_size) + " exceeds file length " + std::to_string(bytes.size()), 4);
  }

  WavData w;
  bool have_fmt = false;
  std::uint16_t block_align = 0;
  while (true) {
    const std::size_t chunk_at = r.offset();
    const std::string id = r.tag("chunk id");
    const std::uint32_t size = r.u32("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw FormatError("fmt chunk too small (" + std::to_string(size) + " bytes)", chunk_at + 4);
      auto body = r.take(size, "fmt chunk");
      ByteReader f(body);
      std::uint16_t tag = f.u16();
      w.channels = f.u16();
      w.sample_rate = f.u32();
      f.u32();  // byte rate
      block_align = f.u16();
      w.bits = f.u16();
      if (tag == detail::kExtensible) {
        if (size < 40) throw FormatError("extensible fmt chunk too small", chunk_at + 4);
        f.u16();  // cbSize
        f.u16();  // valid bits
        f.u32();  // channel mask
        tag = f.u16();  // first two bytes of the sub-format GUID
      }
      if (tag == detail::kFloat) {
        if (w.bits != 32) throw UnsupportedError("float WAV with " + std::to_string(w.bits) + "-bit samples");
        w.is_float = true;
      } else if (tag == detail::kPcm) {
        if (w.bits != 8 && w.bits != 16 && w.bits != 24 && w.bits != 32) {
          throw UnsupportedError("PCM WAV with " + std::to_string(w.bits) + "-bit samples");
        }
      } else {
        throw UnsupportedError("unsupported WAV format tag " + std::to_string(tag));
      }
      if (w.channels == 0) throw FormatError("WAV has zero channels", chunk_at + 10);
      if (w.sample_rate == 0) throw FormatError("WAV has zero sample rate", chunk_at + 12);
      if (block_align != w.channels * (w.bits / 8)) {
        throw FormatError("block align " + std::to_string(block_align) + " inconsistent with format", chunk_at + 20);
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk", chunk_at);
      if (size % block_align != 0) throw FormatError("data size is not a whole number of frames", chunk_at + 4);
      auto body = r.take(size, "data chunk");
      const std::size_t bps = w.bits / 8;
      w.interleaved.resize(size / bps);
      for (std::size_t i = 0; i < w.interleaved.size(); ++i) {
        const double v = detail::decode_sample(body.data() + i * bps, w.bits, w.is_float);
        if (!std::isfinite(v)) throw FormatError("non-finite float sample", chunk_at + 8 + i * bps);
        w.interleaved[i] = std::clamp(v, -1.0, 1.0);
      }
      return w;
    } else {
      r.skip(size, "chunk body");
    }
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1, "chunk pad");
  }
}

inline dsp::Waveform to_mono(const WavData& w) {
  dsp::Waveform out{std::vector<double>(w.frames(), 0.0), static_cast<double>(w.sample_rate)};
  for (std::size_t f = 0; f < w.frames(); ++f) {
    double s = 0.0;
    for (std::size_t c = 0; c < w.channels; ++c) s += w.interleaved[f * w.channels + c];
    out.samples[f] = s / w.channels;
  }
  return out;
}

/// Mono waveform at `target_rate` (linear resampling when the file differs).
inline dsp::Waveform read_wav(const std::filesystem::path& path, double target_rate = dsp::kDefaultSampleRate) {
  const auto bytes = read_file(path);
  try {
    return dsp::resample(to_mono(decode_wav(bytes)), target_rate);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

enum class WavEncoding { pcm16, float32 };

inline std::vector<std::uint8_t> encode_wav(const WavData& w, WavEncoding enc = WavEncoding::pcm16) {
  if (w.channels == 0 || w.sample_rate == 0) throw std::invalid_argument("encode_wav: channels and rate must be positive");
  const std::uint16_t bps = enc == WavEncoding::pcm16 ? 2 : 4;
  const auto data_size = static_cast<std::uint32_t>(w.interleaved.size() * bps);
  ByteWriter b;
  b.tag("RIFF");
  b.u32(36 + data_size);
  b.tag("WAVE");
  b.tag("fmt ");
  b.u32(16);
  b.u16(enc == WavEncoding::pcm16 ? detail::kPcm : detail::kFloat);
  b.u16(w.channels);
  b.u32(w.sample_rate);
  b.u32(w.sample_rate * w.channels * bps);
  b.u16(static_cast<std::uint16_t>(w.channels * bps));
  b.u16(static_cast<std::uint16_t>(bps * 8));
  b.tag("data");
  b.u32(data_size);
  for (double v : w.interleaved) {
    if (enc == WavEncoding::pcm16) {
      b.i16(static_cast<std::int16_t>(std::clamp(std::lround(v * 32768.0), -32768L, 32767L)));
    } else {
      b.f32(static_cast<float>(v));
    }
  }
  return b.bytes();
}

inline void write_wav(const std::filesystem::path& path, const dsp::Waveform& x, WavEncoding enc = WavEncoding::pcm16) {
  WavData w;
  w.sample_rate = static_cast<std::uint32_t>(std::lround(x.sample_rate));
  w.interleaved = x.samples;
  write_file(path, encode_wav(w, enc));
}

}  // namespace diffaug::io
