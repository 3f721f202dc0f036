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

// DENW checkpoint layout (little-endian):
//   "DENW" u32 version
//   u32 in_channels, height, width, base_width, time_dim, num_classes,
//       num_timesteps, levels, multipliers[levels]
//   u64 seed (as two u32, low word first)
//   u32 parameter_count, then per parameter: u32 rank, u32 dims[rank],
//       f32 values[product(dims)]

#include <filesystem>
#include <string>

#include "diffaug/data/bytes.hpp"
#include "diffaug/denoisers/condnet.hpp"

namespace diffaug {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_grids(io::ByteWriter& w, const std::vector<BasicGrid<T>>& grids) {
  w.u32(static_cast<std::uint32_t>(grids.size()));
  for (const auto& g : grids) {
    w.u32(static_cast<std::uint32_t>(g.rank()));
    for (auto d : g.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (auto v : g.data()) w.f32(static_cast<float>(v));
  }
}

template <class T>
void read_grids_into(io::ByteReader& r, std::vector<BasicGrid<T>>& grids) {
  const std::size_t at = r.offset();
  const auto count = r.u32("parameter count");
  if (count != grids.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " parameters, architecture expects " +
                          std::to_string(grids.size()),
                      at);
  }
  for (auto& g : grids) {
    const std::size_t gat = r.offset();
    const auto rank = r.u32("parameter rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("parameter dim"));
    if (shape != g.shape()) {
      throw FormatError("checkpoint parameter shape " + shape_string(shape) + " differs from " +
                            shape_string(g.shape()),
                        gat);
    }
    r.need(4 * g.numel(), "parameter values");
    for (auto& v : g.data()) v = static_cast<T>(r.f32());
  }
}

}  // namespace detail

template <class T>
std::vector<std::uint8_t> encode_checkpoint(const CondNetLite<T>& model) {
  const auto& c = model.config();
  io::ByteWriter w;
  w.tag("DENW");
  w.u32(kCheckpointVersion);
  for (auto v : {c.in_channels, c.height, c.width, c.base_width, c.time_dim, c.num_classes}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u32(static_cast<std::uint32_t>(c.num_timesteps));
  w.u32(static_cast<std::uint32_t>(c.levels()));
  for (auto m : c.multipliers) w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(c.seed & 0xffffffffu));
  w.u32(static_cast<std::uint32_t>(c.seed >> 32));
  detail::write_grids(w, model.parameters());
  return w.bytes();
}

template <class T>
CondNetLite<T> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (r.tag("magic") != "DENW") throw FormatError("not a DENW checkpoint", 0);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  CondNetConfig c;
  c.in_channels = r.u32();
  c.height = r.u32();
  c.width = r.u32();
  c.base_width = r.u32();
  c.time_dim = r.u32();
  c.num_classes = r.u32();
  c.num_timesteps = static_cast<int>(r.u32());
  const std::size_t at = r.offset();
  const auto levels = r.u32("levels");
  if (levels == 0 || levels > 16) throw FormatError("implausible level count " + std::to_string(levels), at);
  c.multipliers.clear();
  for (std::uint32_t i = 0; i < levels; ++i) c.multipliers.push_back(r.u32("multiplier"));
  const std::uint64_t lo = r.u32(), hi = r.u32();
  c.seed = lo | (hi << 32);
  CondNetLite<T> model = [&] {
    try {
      return CondNetLite<T>(c);
    } catch (const std::exception& e) {
      throw FormatError(std::string("invalid architecture block: ") + e.what(), at);
    }
  }();
  detail::read_grids_into(r, model.parameters());
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return model;
}

template <class T>
void save_checkpoint(const CondNetLite<T>& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

template <class T>
CondNetLite<T> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_checkpoint<T>(bytes);
}

}  // namespace diffaug
