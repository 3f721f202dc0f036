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

// Reverse-mode automatic differentiation over BasicGrid values.
//
// The primitive set is closed: every operation is a free function in
// diffaug::ad taking Var handles, so composing anything outside it fails at
// compile time. Nodes are appended in evaluation order, which is a valid
// topological order; backward() walks it once in reverse.

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "diffaug/numerics/kernels.hpp"

namespace diffaug {

template <class T>
class Tape;

template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const BasicGrid<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <class T>
class Tape {
 public:
  /// Propagates the gradient arriving at a node to its parents.
  using Backward = std::function<void(Tape&, const BasicGrid<T>& out_grad)>;

  /// With recording off, values are computed through the same kernels but no
  /// adjoints are stored.
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(BasicGrid<T> value) { return push(std::move(value), false, {}); }

  /// A leaf whose gradient is accumulated by backward().
  Var<T> parameter(BasicGrid<T> value) { return push(std::move(value), recording_, {}); }

  const BasicGrid<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }

  bool needs_grad(Var<T> v) const { return nodes_.at(v.id()).needs_grad; }

  /// Gradient of the last backward() root with respect to `v`; zeros if `v`
  /// did not influence the root.
  BasicGrid<T> grad(Var<T> v) const {
    const auto& n = nodes_.at(v.id());
    if (n.grad.empty()) return BasicGrid<T>(n.value.shape());
    return n.grad;
  }

  void backward(Var<T> root) {
    if (!recording_) throw std::logic_error("backward() on a non-recording tape");
    auto& r = nodes_.at(root.id());
    if (r.value.numel() != 1) {
      throw ShapeError("backward root must be a scalar, got " + shape_string(r.value.shape()));
    }
    for (auto& n : nodes_) n.grad = BasicGrid<T>();
    r.grad = BasicGrid<T>(r.value.shape(), T(1));
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
      // The closure may touch other nodes, so hand it a stable copy.
      const BasicGrid<T> g = n.grad;
      n.backward(*this, g);
    }
  }

  /// Creates a node depending on `parents`. The closure is kept only when
  /// recording and some parent needs a gradient.
  Var<T> record(BasicGrid<T> value, std::initializer_list<Var<T>> parents, Backward fn) {
    bool needs = false;
    if (recording_) {
      for (auto p : parents) needs = needs || nodes_.at(p.id()).needs_grad;
    }
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  /// Adds `g` into the gradient slot of `v` (no-op for constants).
  void accumulate(Var<T> v, const BasicGrid<T>& g) {
    auto& n = nodes_.at(v.id());
    if (!n.needs_grad) return;
    if (n.grad.empty()) {
      n.grad = g;
      return;
    }
    require_same_shape(n.grad.shape(), g.shape(), "gradient accumulation");
    for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
  }

  /// Direct access for kernels that scatter into a gradient in place.
  BasicGrid<T>& grad_slot(Var<T> v) {
    auto& n = nodes_.at(v.id());
    if (n.grad.empty()) n.grad = BasicGrid<T>(n.value.shape());
    return n.grad;
  }

 private:
  struct Node {
    BasicGrid<T> value;
    BasicGrid<T> grad;
    bool needs_grad = false;
    Backward backward;
  };

  Var<T> push(BasicGrid<T> value, bool needs_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), BasicGrid<T>(), needs_grad, std::move(fn)});
    return Var<T>(this, nodes_.size() - 1);
  }

  bool recording_;
  std::vector<Node> nodes_;
};

namespace ad {

namespace detail {
template <class T>
void same_tape(Var<T> a, Var<T> b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands recorded on different tapes");
}
}  // namespace detail

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  auto& tape = a.tape();
  return tape.record(kernels::matmul(a.value(), b.value()), {a, b},
                     [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                       const auto& av = t.value(a);
                       const auto& bv = t.value(b);
                       const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
                       const auto gm = kernels::as_matrix(g, m, n);
                       if (t.needs_grad(a)) {
                         BasicGrid<T> ga(av.shape());
                         kernels::as_matrix(ga, m, k).noalias() =
                             gm * kernels::as_matrix(bv, k, n).transpose();
                         t.accumulate(a, ga);
                       }
                       if (t.needs_grad(b)) {
                         BasicGrid<T> gb(bv.shape());
                         kernels::as_matrix(gb, k, n).noalias() =
                             kernels::as_matrix(av, m, k).transpose() * gm;
                         t.accumulate(b, gb);
                       }
                     });
}

/// x[m,k] * w[k,n] + bias[n]
template <class T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> bias) {
  detail::same_tape(x, w);
  detail::same_tape(x, bias);
  auto& tape = x.tape();
  auto out = kernels::affine(x.value(), w.value(), bias.value());
  return tape.record(std::move(out), {x, w, bias},
                     [x, w, bias](Tape<T>& t, const BasicGrid<T>& g) {
                       const auto& xv = t.value(x);
                       const auto& wv = t.value(w);
                       const std::size_t m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
                       const auto gm = kernels::as_matrix(g, m, n);
                       if (t.needs_grad(x)) {
                         BasicGrid<T> gx(xv.shape());
                         kernels::as_matrix(gx, m, k).noalias() =
                             gm * kernels::as_matrix(wv, k, n).transpose();
                         t.accumulate(x, gx);
                       }
                       if (t.needs_grad(w)) {
                         BasicGrid<T> gw(wv.shape());
                         kernels::as_matrix(gw, k, n).noalias() =
                             kernels::as_matrix(xv, m, k).transpose() * gm;
                         t.accumulate(w, gw);
                       }
                       if (t.needs_grad(bias)) {
                         BasicGrid<T> gb(t.value(bias).shape());
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                         t.accumulate(bias, gb);
                       }
                     });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> kernel, Var<T> bias, std::size_t stride = 1,
              std::size_t pad = 0) {
  detail::same_tape(x, kernel);
  detail::same_tape(x, bias);
  auto& tape = x.tape();
  auto out = kernels::conv2d(x.value(), kernel.value(), bias.value(), stride, pad);
  return tape.record(
      std::move(out), {x, kernel, bias},
      [x, kernel, bias, stride, pad](Tape<T>& t, const BasicGrid<T>& g) {
        const auto& xv = t.value(x);
        const auto& kv = t.value(kernel);
        const auto geo = kernels::conv_geometry(xv.shape(), kv.shape(), stride, pad);
        const auto P = static_cast<Eigen::Index>(geo.patch());
        const auto O = static_cast<Eigen::Index>(geo.out_pixels());
        const auto C = static_cast<Eigen::Index>(geo.out_ch);
        const bool want_x = t.needs_grad(x), want_k = t.needs_grad(kernel),
                   want_b = t.needs_grad(bias);
        std::vector<T> cols(geo.patch() * geo.out_pixels());
        std::vector<T> dcols(want_x ? cols.size() : 0);
        BasicGrid<T> gk(kv.shape());
        BasicGrid<T> gb(t.value(bias).shape());
        BasicGrid<T> gx(want_x ? xv.shape() : Shape{1});
        const auto kmat = kernels::as_matrix(kv, geo.out_ch, geo.patch());
        auto gkmat = kernels::as_matrix(gk, geo.out_ch, geo.patch());
        const std::size_t in_stride = geo.in_ch * geo.height * geo.width;
        for (std::size_t n = 0; n < geo.batch; ++n) {
          kernels::ConstMatMap<T> gout(g.data().data() + n * geo.out_ch * geo.out_pixels(), C, O);
          if (want_k) {
            kernels::im2col(geo, xv.data().data() + n * in_stride, cols.data());
            gkmat.noalias() += gout * kernels::ConstMatMap<T>(cols.data(), P, O).transpose();
          }
          if (want_b) {
            for (Eigen::Index c = 0; c < C; ++c) {
              kernels::Accum<T> acc = 0;
              for (Eigen::Index i = 0; i < O; ++i) acc += gout(c, i);
              gb[static_cast<std::size_t>(c)] += static_cast<T>(acc);
            }
          }
          if (want_x) {
            kernels::MatMap<T>(dcols.data(), P, O).noalias() = kmat.transpose() * gout;
            kernels::col2im(geo, dcols.data(), gx.data().data() + n * in_stride);
          }
        }
        if (want_k) t.accumulate(kernel, gk);
        if (want_b) t.accumulate(bias, gb);
        if (want_x) t.accumulate(x, gx);
      });
}

template <class T>
Var<T> activation(kernels::Activation a, Var<T> x) {
  return x.tape().record(kernels::apply(a, x.value()), {x},
                         [a, x](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& xv = t.value(x);
                           BasicGrid<T> gx(xv.shape());
                           for (std::size_t i = 0; i < xv.numel(); ++i)
                             gx[i] = g[i] * kernels::activate_derivative(a, xv[i]);
                           t.accumulate(x, gx);
                         });
}

template <class T>
Var<T> silu(Var<T> x) { return activation(kernels::Activation::silu, x); }
template <class T>
Var<T> tanh(Var<T> x) { return activation(kernels::Activation::tanh, x); }
template <class T>
Var<T> sin(Var<T> x) { return activation(kernels::Activation::sin, x); }
template <class T>
Var<T> cos(Var<T> x) { return activation(kernels::Activation::cos, x); }

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  return a.tape().record(kernels::add(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  return a.tape().record(kernels::sub(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, kernels::scale(g, T(-1)));
                         });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  return a.tape().record(kernels::mul(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                           if (t.needs_grad(a)) t.accumulate(a, kernels::mul(g, t.value(b)));
                           if (t.needs_grad(b)) t.accumulate(b, kernels::mul(g, t.value(a)));
                         });
}

template <class T>
Var<T> scale(Var<T> a, T s) {
  return a.tape().record(kernels::scale(a.value(), s), {a},
                         [a, s](Tape<T>& t, const BasicGrid<T>& g) {
                           t.accumulate(a, kernels::scale(g, s));
                         });
}

/// x[N,C,...] + v[N,C] broadcast over the trailing axes.
template <class T>
Var<T> add_channel(Var<T> x, Var<T> v) {
  detail::same_tape(x, v);
  return x.tape().record(kernels::add_channel(x.value(), v.value()), {x, v},
                         [x, v](Tape<T>& t, const BasicGrid<T>& g) {
                           t.accumulate(x, g);
                           if (!t.needs_grad(v)) return;
                           const auto& vv = t.value(v);
                           const std::size_t plane = g.numel() / vv.numel();
                           BasicGrid<T> gv(vv.shape());
                           for (std::size_t p = 0; p < vv.numel(); ++p) {
                             kernels::Accum<T> acc = 0;
                             for (std::size_t i = 0; i < plane; ++i) acc += g[p * plane + i];
                             gv[p] = static_cast<T>(acc);
                           }
                           t.accumulate(v, gv);
                         });
}

template <class T>
Var<T> concat(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  return a.tape().record(kernels::concat(a.value(), b.value()), {a, b},
                         [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& av = t.value(a);
                           const auto& bv = t.value(b);
                           const std::size_t ra = av.numel() / av.dim(0), rb = bv.numel() / bv.dim(0);
                           BasicGrid<T> ga(av.shape()), gb(bv.shape());
                           for (std::size_t n = 0; n < av.dim(0); ++n) {
                             std::copy_n(g.data().data() + n * (ra + rb), ra, ga.data().data() + n * ra);
                             std::copy_n(g.data().data() + n * (ra + rb) + ra, rb, gb.data().data() + n * rb);
                           }
                           t.accumulate(a, ga);
                           t.accumulate(b, gb);
                         });
}

template <class T>
Var<T> upsample2x(Var<T> x) {
  return x.tape().record(kernels::upsample2x(x.value()), {x},
                         [x](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& xv = t.value(x);
                           const std::size_t nc = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
                           BasicGrid<T> gx(xv.shape());
                           for (std::size_t p = 0; p < nc; ++p)
                             for (std::size_t y = 0; y < 2 * h; ++y)
                               for (std::size_t xx = 0; xx < 2 * w; ++xx)
                                 gx[p * h * w + (y / 2) * w + xx / 2] += g[p * 4 * h * w + y * 2 * w + xx];
                           t.accumulate(x, gx);
                         });
}

template <class T>
Var<T> sum(Var<T> x) {
  return x.tape().record(BasicGrid<T>::scalar(kernels::sum(x.value())), {x},
                         [x](Tape<T>& t, const BasicGrid<T>& g) {
                           t.accumulate(x, BasicGrid<T>(t.value(x).shape(), g[0]));
                         });
}

template <class T>
Var<T> mean(Var<T> x) {
  return x.tape().record(BasicGrid<T>::scalar(kernels::mean(x.value())), {x},
                         [x](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& xv = t.value(x);
                           t.accumulate(x, BasicGrid<T>(xv.shape(), g[0] / static_cast<T>(xv.numel())));
                         });
}

/// Global average pooling: x[N,C,...] -> [N,C].
template <class T>
Var<T> spatial_mean(Var<T> x) {
  return x.tape().record(kernels::spatial_mean(x.value()), {x},
                         [x](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& xv = t.value(x);
                           const std::size_t nc = xv.dim(0) * xv.dim(1), plane = xv.numel() / nc;
                           BasicGrid<T> gx(xv.shape());
                           for (std::size_t p = 0; p < nc; ++p)
                             for (std::size_t i = 0; i < plane; ++i)
                               gx[p * plane + i] = g[p] / static_cast<T>(plane);
                           t.accumulate(x, gx);
                         });
}

template <class T>
Var<T> mse(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  return a.tape().record(BasicGrid<T>::scalar(kernels::mse(a.value(), b.value())), {a, b},
                         [a, b](Tape<T>& t, const BasicGrid<T>& g) {
                           const auto& av = t.value(a);
                           const auto& bv = t.value(b);
                           const T c = T(2) * g[0] / static_cast<T>(av.numel());
                           BasicGrid<T> ga(av.shape());
                           for (std::size_t i = 0; i < av.numel(); ++i) ga[i] = c * (av[i] - bv[i]);
                           if (t.needs_grad(b)) t.accumulate(b, kernels::scale(ga, T(-1)));
                           t.accumulate(a, ga);
                         });
}

/// Mean softmax cross-entropy of logits[N,C] against integer labels with
/// label smoothing.
template <class T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> labels, double smoothing) {
  std::vector<int> owned(labels.begin(), labels.end());
  auto value = BasicGrid<T>::scalar(kernels::cross_entropy(logits.value(), labels, smoothing));
  return logits.tape().record(
      std::move(value), {logits},
      [logits, owned = std::move(owned), smoothing](Tape<T>& t, const BasicGrid<T>& g) {
        const auto& lv = t.value(logits);
        const std::size_t n = lv.dim(0), c = lv.dim(1);
        const auto p = kernels::softmax_rows(lv);
        BasicGrid<T> gl(lv.shape());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const double q = kernels::smoothed_target(j, static_cast<std::size_t>(owned[i]), c, smoothing);
            gl[i * c + j] = static_cast<T>(static_cast<double>(g[0]) * (p[i * c + j] - q) /
                                           static_cast<double>(n));
          }
        t.accumulate(logits, gl);
      });
}

}  // namespace ad
}  // namespace diffaug
