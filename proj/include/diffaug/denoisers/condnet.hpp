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

// CondNetLite: a small conditional U-shaped convolutional epsilon model.
//
// Layout per level i (channels base_width * multipliers[i]):
//   down:  block -> block -> [skip] -> stride-2 conv
//   up:    upsample -> concat(skip) -> block -> block
// A block is conv3x3 + per-channel projection of the conditioning vector +
// SiLU. Conditioning is a learned sinusoidal time embedding plus a class
// embedding whose extra row (index num_classes) is the null label.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/denoisers/model.hpp"
#include "diffaug/numerics/rng.hpp"
#include "diffaug/numerics/tape.hpp"

namespace diffaug {

struct CondNetConfig {
  std::size_t in_channels = 1;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t base_width = 16;
  std::vector<std::size_t> multipliers = {1, 2, 4, 8};
  std::size_t time_dim = 16;
  std::size_t num_classes = 10;
  int num_timesteps = 1000;
  std::uint64_t seed = 0;

  std::size_t levels() const { return multipliers.size(); }
  std::size_t channels(std::size_t level) const { return base_width * multipliers.at(level); }
  std::size_t embed_dim() const { return 4 * base_width; }

  void validate() const {
    if (in_channels == 0 || base_width == 0 || multipliers.empty() || time_dim < 2 ||
        time_dim % 2 != 0 || num_classes == 0 || num_timesteps < 1) {
      throw std::invalid_argument("condnet: invalid configuration");
    }
    const std::size_t f = std::size_t{1} << (levels() - 1);
    if (height % f != 0 || width % f != 0) {
      throw ShapeError("condnet: input " + std::to_string(height) + "x" + std::to_string(width) +
                       " not divisible by 2^" + std::to_string(levels() - 1));
    }
  }

  friend bool operator==(const CondNetConfig&, const CondNetConfig&) = default;
};

template <class T>
class CondNetLite {
 public:
  explicit CondNetLite(CondNetConfig config) : config_(std::move(config)) {
    config_.validate();
    build();
  }

  const CondNetConfig& config() const { return config_; }
  std::vector<BasicGrid<T>>& parameters() { return params_; }
  const std::vector<BasicGrid<T>>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.numel();
    return n;
  }

  /// Records the forward pass. `x` is [N, C, H, W]; one time and one label
  /// per sample.
  Var<T> forward(Tape<T>& tape, std::span<const Var<T>> p, Var<T> x,
                 std::span<const double> times, std::span<const ClassLabel> labels) const {
    const auto& xs = x.shape();
    if (xs.size() != 4 || xs[1] != config_.in_channels) {
      throw ShapeError("condnet: expected input [N," + std::to_string(config_.in_channels) +
                       ",H,W], got " + shape_string(xs));
    }
    const std::size_t f = std::size_t{1} << (config_.levels() - 1);
    if (xs[2] % f != 0 || xs[3] % f != 0) {
      throw ShapeError("condnet: spatial dims of " + shape_string(xs) + " not divisible by " +
                       std::to_string(f));
    }
    const std::size_t n = xs[0];
    if (times.size() != n) throw ShapeError("condnet: expected one time per sample");
    if (!labels.empty() && labels.size() != n) throw ShapeError("condnet: expected one label per sample");

    // Conditioning vector.
    BasicGrid<T> tnorm({n, 1});
    BasicGrid<T> onehot({n, config_.num_classes + 1});
    for (std::size_t i = 0; i < n; ++i) {
      tnorm[i] = static_cast<T>(times[i] / config_.num_timesteps);
      onehot[i * (config_.num_classes + 1) + class_slot(label_for(labels, i))] = T(1);
    }
    auto tv = tape.constant(std::move(tnorm));
    auto phase = ad::scale(ad::matmul(tv, p[freq_]), static_cast<T>(2 * std::numbers::pi));
    auto feats = ad::concat(ad::concat(tv, ad::sin(phase)), ad::cos(phase));
    auto temb = ad::affine(ad::silu(ad::affine(feats, p[fc1_w_], p[fc1_b_])), p[fc2_w_], p[fc2_b_]);
    auto cemb = ad::matmul(tape.constant(std::move(onehot)), p[class_table_]);
    auto cond = ad::silu(ad::add(temb, cemb));

    auto h = ad::conv2d(x, p[in_k_], p[in_b_], 1, 1);
    std::vector<Var<T>> skips;
    for (std::size_t l = 0; l < config_.levels(); ++l) {
      h = block(p, down_[l][0], h, cond);
      h = block(p, down_[l][1], h, cond);
      if (l + 1 < config_.levels()) {
        skips.push_back(h);
        h = ad::conv2d(h, p[downsample_[l].kernel], p[downsample_[l].bias], 2, 1);
      }
    }
    for (std::size_t l = config_.levels() - 1; l-- > 0;) {
      h = ad::concat(ad::upsample2x(h), skips[l]);
      h = block(p, up_[l][0], h, cond);
      h = block(p, up_[l][1], h, cond);
    }
    return ad::conv2d(h, p[out_k_], p[out_b_], 1, 1);
  }

  /// Inference on a batch [N, C, H, W] (or [N, H, W] when C == 1).
  BasicGrid<T> predict(const BasicGrid<T>& x, double t, std::span<const ClassLabel> labels = {}) const {
    const std::vector<double> times(x.dim(0), t);
    return predict(x, std::span<const double>(times), labels);
  }

  BasicGrid<T> predict(const BasicGrid<T>& x, std::span<const double> times,
                       std::span<const ClassLabel> labels) const {
    const Shape original = x.shape();
    BasicGrid<T> in = x;
    if (x.rank() == 3 && config_.in_channels == 1) in = x.reshaped({x.dim(0), 1, x.dim(1), x.dim(2)});
    Tape<T> tape(false);
    std::vector<Var<T>> p;
    p.reserve(params_.size());
    for (const auto& g : params_) p.push_back(tape.constant(g));
    auto out = forward(tape, p, tape.constant(std::move(in)), times, labels);
    return out.value().reshaped(original);
  }

  std::size_t class_slot(ClassLabel label) const {
    if (!label) return config_.num_classes;
    if (*label < 0 || static_cast<std::size_t>(*label) >= config_.num_classes) {
      throw std::out_of_range("condnet: label " + std::to_string(*label) + " outside [0, " +
                              std::to_string(config_.num_classes) + ")");
    }
    return static_cast<std::size_t>(*label);
  }

 private:
  struct BlockParams {
    std::size_t kernel, bias, proj_w, proj_b;
  };
  struct ConvParams {
    std::size_t kernel, bias;
  };

  Var<T> block(std::span<const Var<T>> p, const BlockParams& b, Var<T> h, Var<T> cond) const {
    auto y = ad::conv2d(h, p[b.kernel], p[b.bias], 1, 1);
    y = ad::add_channel(y, ad::affine(cond, p[b.proj_w], p[b.proj_b]));
    return ad::silu(y);
  }

  std::size_t add_param(std::string name, Shape shape, double bound) {
    BasicGrid<T> g(std::move(shape));
    for (auto& v : g.data()) v = static_cast<T>(rng_.uniform(-bound, bound));
    params_.push_back(std::move(g));
    names_.push_back(std::move(name));
    return params_.size() - 1;
  }

  std::size_t add_zeros(std::string name, Shape shape) {
    params_.emplace_back(std::move(shape));
    names_.push_back(std::move(name));
    return params_.size() - 1;
  }

  ConvParams add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
    return {add_param(name + ".kernel", {out, in, k, k}, bound),
            add_param(name + ".bias", {out}, bound)};
  }

  BlockParams add_block(const std::string& name, std::size_t out, std::size_t in) {
    const auto c = add_conv(name + ".conv", out, in, 3);
    const std::size_t e = config_.embed_dim();
    const double bound = 1.0 / std::sqrt(static_cast<double>(e));
    return {c.kernel, c.bias, add_param(name + ".proj.weight", {e, out}, bound),
            add_zeros(name + ".proj.bias", {out})};
  }

  void build() {
    rng_ = Rng(config_.seed, 0xc0de);
    const std::size_t half = config_.time_dim / 2, e = config_.embed_dim();
    freq_ = add_param("time.freq", {1, half}, 1.0);
    for (auto& v : params_[freq_].data()) v = static_cast<T>(rng_.normal());
    const double b1 = 1.0 / std::sqrt(static_cast<double>(config_.time_dim + 1));
    fc1_w_ = add_param("time.fc1.weight", {config_.time_dim + 1, e}, b1);
    fc1_b_ = add_param("time.fc1.bias", {e}, b1);
    const double b2 = 1.0 / std::sqrt(static_cast<double>(e));
    fc2_w_ = add_param("time.fc2.weight", {e, e}, b2);
    fc2_b_ = add_param("time.fc2.bias", {e}, b2);
    class_table_ = add_param("class.table", {config_.num_classes + 1, e}, 1.0);

    const auto in = add_conv("in", config_.channels(0), config_.in_channels, 3);
    in_k_ = in.kernel;
    in_b_ = in.bias;
    std::size_t prev = config_.channels(0);
    down_.resize(config_.levels());
    for (std::size_t l = 0; l < config_.levels(); ++l) {
      const std::size_t c = config_.channels(l);
      const std::string name = "down" + std::to_string(l);
      down_[l][0] = add_block(name + ".0", c, prev);
      down_[l][1] = add_block(name + ".1", c, c);
      if (l + 1 < config_.levels()) downsample_.push_back(add_conv(name + ".downsample", c, c, 3));
      prev = c;
    }
    up_.resize(config_.levels() - 1);
    for (std::size_t l = config_.levels() - 1; l-- > 0;) {
      const std::size_t c = config_.channels(l);
      const std::string name = "up" + std::to_string(l);
      up_[l][0] = add_block(name + ".0", c, prev + c);
      up_[l][1] = add_block(name + ".1", c, c);
      prev = c;
    }
    const auto out = add_conv("out", config_.in_channels, prev, 3);
    out_k_ = out.kernel;
    out_b_ = out.bias;
  }

  CondNetConfig config_;
  std::vector<BasicGrid<T>> params_;
  std::vector<std::string> names_;
  Rng rng_;
  std::size_t freq_ = 0, fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0, class_table_ = 0;
  std::size_t in_k_ = 0, in_b_ = 0, out_k_ = 0, out_b_ = 0;
  std::vector<std::array<BlockParams, 2>> down_, up_;
  std::vector<ConvParams> downsample_;
};

}  // namespace diffaug
