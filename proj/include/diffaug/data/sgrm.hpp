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

// SGRM spectrogram files: "SGRM", u32 version, u32 rows, u32 cols, then
// rows*cols little-endian float32 row-major, then optionally one label byte.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffaug/data/bytes.hpp"
#include "diffaug/error.hpp"
#include "diffaug/numerics/grid.hpp"

namespace diffaug::io {

inline constexpr std::uint32_t kSgrmVersion = 1;
inline constexpr std::size_t kSgrmHeaderBytes = 16;

struct Spectrogram {
  BasicGrid<float> grid;
  std::optional<std::uint8_t> label;
};

inline std::vector<std::uint8_t> encode_sgrm(const BasicGrid<float>& g, std::optional<std::uint8_t> label = {}) {
  // [1, H, W] is accepted as the single-channel layout the models use
  const bool chw = g.rank() == 3 && g.dim(0) == 1;
  if (g.rank() != 2 && !chw) throw ShapeError("SGRM holds 2-D grids, got " + shape_string(g.shape()));
  const std::size_t rows = g.dim(g.rank() - 2), cols = g.dim(g.rank() - 1);
  ByteWriter w;
  w.tag("SGRM");
  w.u32(kSgrmVersion);
  w.u32(static_cast<std::uint32_t>(rows));
  w.u32(static_cast<std::uint32_t>(cols));
  for (float v : g.data()) w.f32(v);
  if (label) w.u8(*label);
  return w.bytes();
}

inline Spectrogram decode_sgrm(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.tag("magic") != "SGRM") throw FormatError("not a spectrogram file", 0);
  const auto version = r.u32("version");
  if (version != kSgrmVersion) throw FormatError("unsupported SGRM version " + std::to_string(version), 4);
  const std::uint64_t rows = r.u32("rows"), cols = r.u32("cols");
  if (rows == 0 || cols == 0) {
    throw FormatError("empty spectrogram: header says " + std::to_string(rows) + "x" + std::to_string(cols), 8);
  }
  const std::uint64_t payload = rows * cols * 4;
  if (payload > r.remaining()) {
    throw FormatError("payload size error: header says " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " (" + std::to_string(payload) + " bytes), " + std::to_string(r.remaining()) + " present",
                      kSgrmHeaderBytes);
  }
  Spectrogram s{BasicGrid<float>({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)}), std::nullopt};
  for (auto& v : s.grid.data()) v = r.f32();
  if (r.remaining() == 1) {
    s.label = r.u8();
  } else if (r.remaining() > 1) {
    throw FormatError("payload size error: " + std::to_string(r.remaining()) + " unexpected trailing bytes", r.offset());
  }
  return s;
}

inline void write_sgrm(const std::filesystem::path& path, const BasicGrid<float>& g,
                       std::optional<std::uint8_t> label = {}) {
  write_file(path, encode_sgrm(g, label));
}

inline Spectrogram read_sgrm(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_sgrm(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

}  // namespace diffaug::io
