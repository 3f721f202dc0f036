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

// Tape-free forward kernels and the adjoint helpers the tape reuses. Every
// recorded primitive computes its value through exactly these functions.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "diffaug/numerics/grid.hpp"

namespace diffaug::kernels {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
ConstMatMap<T> as_matrix(const BasicGrid<T>& g, std::size_t rows, std::size_t cols) {
  return ConstMatMap<T>(g.data().data(), static_cast<Eigen::Index>(rows),
                        static_cast<Eigen::Index>(cols));
}

template <class T>
MatMap<T> as_matrix(BasicGrid<T>& g, std::size_t rows, std::size_t cols) {
  return MatMap<T>(g.data().data(), static_cast<Eigen::Index>(rows),
                   static_cast<Eigen::Index>(cols));
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_string(s));
  }
}

// ---------------------------------------------------------------- linear

template <class T>
BasicGrid<T> matmul(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
  BasicGrid<T> out({a.dim(0), b.dim(1)});
  as_matrix(out, a.dim(0), b.dim(1)).noalias() =
      as_matrix(a, a.dim(0), a.dim(1)) * as_matrix(b, b.dim(0), b.dim(1));
  return out;
}

/// x[m,k] * w[k,n] + bias[n]
template <class T>
BasicGrid<T> affine(const BasicGrid<T>& x, const BasicGrid<T>& w, const BasicGrid<T>& bias) {
  auto out = matmul(x, w);
  if (bias.numel() != w.dim(1)) {
    throw ShapeError("affine: bias " + shape_string(bias.shape()) +
                     " does not match weight " + shape_string(w.shape()));
  }
  const std::size_t n = w.dim(1);
  for (std::size_t i = 0; i < out.dim(0); ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias[j];
  return out;
}

// ----------------------------------------------------------- convolution

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t out_pixels() const { return out_h * out_w; }
};

inline ConvGeometry conv_geometry(const Shape& x, const Shape& k, std::size_t stride,
                                  std::size_t pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (x[1] != k[1]) {
    throw ShapeError("conv2d: input channels of " + shape_string(x) +
                     " do not match kernel " + shape_string(k));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (x[2] + 2 * pad < k[2] || x[3] + 2 * pad < k[3]) {
    throw ShapeError("conv2d: kernel " + shape_string(k) + " larger than padded input " +
                     shape_string(x));
  }
  ConvGeometry g{x[0], x[1], x[2], x[3], k[0], k[2], k[3], stride, pad, 0, 0};
  g.out_h = (g.height + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kw) / stride + 1;
  return g;
}

/// Unfolds sample `n` of x into cols[patch, out_pixels].
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    const T* plane = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T* row = cols + ((c * g.kh + ki) * g.kw + kj) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters cols back into dx (accumulating).
template <class T>
void col2im(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t opix = g.out_pixels();
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    T* plane = dx + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * opix;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

/// x[N,Ci,H,W] (*) k[Co,Ci,kh,kw] + bias[Co], zero padding.
template <class T>
BasicGrid<T> conv2d(const BasicGrid<T>& x, const BasicGrid<T>& k, const BasicGrid<T>& bias,
                    std::size_t stride, std::size_t pad) {
  const auto g = conv_geometry(x.shape(), k.shape(), stride, pad);
  if (bias.numel() != g.out_ch) {
    throw ShapeError("conv2d: bias " + shape_string(bias.shape()) + " does not match kernel " +
                     shape_string(k.shape()));
  }
  BasicGrid<T> out({g.batch, g.out_ch, g.out_h, g.out_w});
  std::vector<T> cols(g.patch() * g.out_pixels());
  const auto kmat = as_matrix(k, g.out_ch, g.patch());
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data().data() + n * g.in_ch * g.height * g.width, cols.data());
    MatMap<T> o(out.data().data() + n * g.out_ch * g.out_pixels(),
                static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(g.out_pixels()));
    o.noalias() = kmat * ConstMatMap<T>(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                        static_cast<Eigen::Index>(g.out_pixels()));
    for (std::size_t c = 0; c < g.out_ch; ++c) o.row(static_cast<Eigen::Index>(c)).array() += bias[c];
  }
  return out;
}

// ----------------------------------------------------------- elementwise

enum class Activation { silu, tanh, sin, cos };

template <class T>
T activate(Activation a, T v) {
  switch (a) {
    case Activation::silu: return v / (T(1) + std::exp(-v));
    case Activation::tanh: return std::tanh(v);
    case Activation::sin: return std::sin(v);
    case Activation::cos: return std::cos(v);
  }
  return v;
}

template <class T>
T activate_derivative(Activation a, T v) {
  switch (a) {
    case Activation::silu: {
      const T s = T(1) / (T(1) + std::exp(-v));
      return s * (T(1) + v * (T(1) - s));
    }
    case Activation::tanh: {
      const T t = std::tanh(v);
      return T(1) - t * t;
    }
    case Activation::sin: return std::cos(v);
    case Activation::cos: return -std::sin(v);
  }
  return T(1);
}

template <class T>
BasicGrid<T> apply(Activation a, const BasicGrid<T>& x) {
  BasicGrid<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = activate(a, x[i]);
  return out;
}

template <class T>
BasicGrid<T> add(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  BasicGrid<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <class T>
BasicGrid<T> sub(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  BasicGrid<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <class T>
BasicGrid<T> mul(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  BasicGrid<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <class T>
BasicGrid<T> scale(const BasicGrid<T>& a, T s) {
  BasicGrid<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

/// Adds v[N,C] to every spatial position of x[N,C,...].
template <class T>
BasicGrid<T> add_channel(const BasicGrid<T>& x, const BasicGrid<T>& v) {
  require_rank(v.shape(), 2, "add_channel vector");
  if (x.rank() < 2 || x.dim(0) != v.dim(0) || x.dim(1) != v.dim(1)) {
    throw ShapeError("add_channel: " + shape_string(x.shape()) + " vs " + shape_string(v.shape()));
  }
  BasicGrid<T> out = x;
  const std::size_t plane = x.numel() / (x.dim(0) * x.dim(1));
  for (std::size_t nc = 0; nc < v.numel(); ++nc) {
    T* p = out.data().data() + nc * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] += v[nc];
  }
  return out;
}

/// Concatenation along axis 1 of two grids that agree on every other axis.
template <class T>
BasicGrid<T> concat(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0) ||
      !std::equal(a.shape().begin() + 2, a.shape().end(), b.shape().begin() + 2)) {
    throw ShapeError("concat: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  Shape s = a.shape();
  s[1] += b.dim(1);
  BasicGrid<T> out(s);
  const std::size_t ra = a.numel() / a.dim(0), rb = b.numel() / b.dim(0);
  for (std::size_t n = 0; n < a.dim(0); ++n) {
    std::copy_n(a.data().data() + n * ra, ra, out.data().data() + n * (ra + rb));
    std::copy_n(b.data().data() + n * rb, rb, out.data().data() + n * (ra + rb) + ra);
  }
  return out;
}

/// Nearest-neighbour 2x upsampling of x[N,C,H,W].
template <class T>
BasicGrid<T> upsample2x(const BasicGrid<T>& x) {
  require_rank(x.shape(), 4, "upsample2x");
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  BasicGrid<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::size_t p = 0; p < nc; ++p) {
    const T* src = x.data().data() + p * h * w;
    T* dst = out.data().data() + p * 4 * h * w;
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
  }
  return out;
}

// ------------------------------------------------------------ reductions

// Accumulate in at least double precision.
template <class T>
using Accum = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

template <class T>
T sum(const BasicGrid<T>& x) {
  Accum<T> acc = 0;
  for (auto v : x.data()) acc += static_cast<Accum<T>>(v);
  return static_cast<T>(acc);
}

template <class T>
T mean(const BasicGrid<T>& x) {
  Accum<T> acc = 0;
  for (auto v : x.data()) acc += static_cast<Accum<T>>(v);
  return static_cast<T>(acc / static_cast<Accum<T>>(x.numel()));
}

/// Mean over trailing axes: x[N,C,...] -> [N,C].
template <class T>
BasicGrid<T> spatial_mean(const BasicGrid<T>& x) {
  if (x.rank() < 3) throw ShapeError("spatial_mean: rank >= 3 required, got " + shape_string(x.shape()));
  const std::size_t nc = x.dim(0) * x.dim(1), plane = x.numel() / nc;
  BasicGrid<T> out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < nc; ++p) {
    Accum<T> acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += static_cast<Accum<T>>(x[p * plane + i]);
    out[p] = static_cast<T>(acc / static_cast<Accum<T>>(plane));
  }
  return out;
}

template <class T>
T mse(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  Accum<T> acc = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const Accum<T> d = static_cast<Accum<T>>(a[i]) - static_cast<Accum<T>>(b[i]);
    acc += d * d;
  }
  return static_cast<T>(acc / static_cast<Accum<T>>(a.numel()));
}

/// Row-wise softmax of logits[N,C], computed in double.
template <class T>
std::vector<double> softmax_rows(const BasicGrid<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<double> p(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(logits[i * c + j]));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += p[i * c + j] = std::exp(static_cast<double>(logits[i * c + j]) - mx);
    for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= z;
  }
  return p;
}

/// Smoothed cross-entropy target distribution for one row.
inline double smoothed_target(std::size_t cls, std::size_t label, std::size_t classes,
                              double smoothing) {
  return (cls == label ? 1.0 - smoothing : 0.0) + smoothing / static_cast<double>(classes);
}

template <class T>
void check_labels(const BasicGrid<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy");
  if (labels.size() != logits.dim(0)) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(logits.shape()));
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= logits.dim(1)) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " out of range");
    }
  }
}

/// Mean softmax cross-entropy with label smoothing.
template <class T>
T cross_entropy(const BasicGrid<T>& logits, std::span<const int> labels, double smoothing) {
  check_labels(logits, labels);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(logits[i * c + j]));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(logits[i * c + j]) - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      const double q = smoothed_target(j, static_cast<std::size_t>(labels[i]), c, smoothing);
      acc -= q * (static_cast<double>(logits[i * c + j]) - log_z);
    }
  }
  return static_cast<T>(acc / static_cast<double>(n));
}

}  // namespace diffaug::kernels
