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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/denoisers/analytic.hpp"
#include "diffaug/denoisers/model.hpp"
#include "diffaug/numerics/adamw.hpp"
#include "diffaug/numerics/rng.hpp"
#include "diffaug/numerics/tape.hpp"
#include "diffaug/schedule.hpp"

namespace diffaug {

template <class T>
struct LabeledSample {
  BasicGrid<T> spectrogram;
  int class_id = 0;
  /// Predefined fold, 1-based. 0 marks samples outside every test fold
  /// (generated data), which are always used for training.
  int fold = 0;
};

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
template <class T>
BasicGrid<T> q_sample(const BasicGrid<T>& x0, double t, const BasicGrid<T>& eps,
                      const NoiseSchedule& schedule) {
  require_same_shape(x0.shape(), eps.shape(), "q_sample");
  const double a = schedule.sqrt_alpha_bar_at(t), s = schedule.sigma_at(t);
  BasicGrid<T> out(x0.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    out[i] = static_cast<T>(a * static_cast<double>(x0[i]) + s * static_cast<double>(eps[i]));
  }
  return out;
}

template <class T>
struct PosteriorParams {
  BasicGrid<T> mean;
  double variance;
};

/// Mean and variance of q(x_{t-1} | x_t, x0). At t = 1 this collapses to
/// (x0, 0).
template <class T>
PosteriorParams<T> posterior_params(const BasicGrid<T>& x0, const BasicGrid<T>& xt, int t,
                                    const NoiseSchedule& schedule) {
  require_same_shape(x0.shape(), xt.shape(), "posterior_params");
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("posterior_params: t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
  const double ab = schedule.alpha_bar(t), ab_prev = schedule.alpha_bar(t - 1);
  const double beta = schedule.beta(t);
  const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
  const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
  PosteriorParams<T> p{BasicGrid<T>(x0.shape()), beta * (1.0 - ab_prev) / (1.0 - ab)};
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    p.mean[i] = static_cast<T>(c0 * static_cast<double>(x0[i]) + ct * static_cast<double>(xt[i]));
  }
  return p;
}

enum class ReverseVariance { posterior, beta };

/// Fixed reverse-process variance at step t. The posterior choice
/// beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) vanishes at t = 1, where
/// beta_1 is used instead.
inline double reverse_variance(const NoiseSchedule& schedule, int t, ReverseVariance kind) {
  if (kind == ReverseVariance::beta || t == 1) return schedule.beta(t);
  return schedule.beta(t) * (1.0 - schedule.alpha_bar(t - 1)) / (1.0 - schedule.alpha_bar(t));
}

/// mu_theta = (x_t - beta_t / sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_t)
template <class T>
BasicGrid<T> reverse_mean(const BasicGrid<T>& xt, const BasicGrid<T>& eps_hat, int t,
                          const NoiseSchedule& schedule) {
  require_same_shape(xt.shape(), eps_hat.shape(), "reverse_mean");
  const double beta = schedule.beta(t);
  const double k = beta / std::sqrt(1.0 - schedule.alpha_bar(t));
  const double inv = 1.0 / std::sqrt(1.0 - beta);
  BasicGrid<T> out(xt.shape());
  for (std::size_t i = 0; i < xt.numel(); ++i) {
    out[i] = static_cast<T>(inv * (static_cast<double>(xt[i]) - k * static_cast<double>(eps_hat[i])));
  }
  return out;
}

namespace detail {
template <class T>
BasicGrid<T> with_batch(const BasicGrid<T>& x) {
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return x.reshaped(std::move(s));
}

template <class T>
double squared_error(const BasicGrid<T>& a, const BasicGrid<T>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}
}  // namespace detail

/// Unweighted noise-prediction loss for one sample: the element mean of
/// (eps - eps_hat(q_sample(x0, t, eps), t, label))^2.
template <class T, EpsilonModel<T> M>
double simple_loss(const M& model, const BasicGrid<T>& x0, ClassLabel label, int t,
                   const BasicGrid<T>& eps, const NoiseSchedule& schedule) {
  const auto xt = detail::with_batch(q_sample(x0, t, eps, schedule));
  const ClassLabel labels[1] = {label};
  const auto pred = model.predict(xt, static_cast<double>(t), std::span<const ClassLabel>(labels));
  return detail::squared_error(pred, detail::with_batch(eps)) / static_cast<double>(x0.numel());
}

/// beta_t^2 / (2 alpha_t (1 - alpha_bar_t) reverse_variance)
inline double weighted_loss_coefficient(int t, const NoiseSchedule& schedule, double reverse_var) {
  if (!(reverse_var > 0.0)) throw std::invalid_argument("weighted loss: reverse variance must be positive");
  const double b = schedule.beta(t);
  return b * b / (2.0 * (1.0 - b) * (1.0 - schedule.alpha_bar(t)) * reverse_var);
}

/// The per-step weighted term: coefficient * ||eps - eps_hat||^2 (summed
/// over elements, additive constant dropped).
template <class T, EpsilonModel<T> M>
double weighted_loss_term(const M& model, const BasicGrid<T>& x0, const BasicGrid<T>& eps, int t,
                          const NoiseSchedule& schedule, double reverse_var, ClassLabel label = {}) {
  const double coef = weighted_loss_coefficient(t, schedule, reverse_var);
  return coef * simple_loss(model, x0, label, t, eps, schedule) * static_cast<double>(x0.numel());
}

struct VlbTerms {
  /// L_T: KL(q(x_T | x0) || N(0, I)).
  double prior = 0.0;
  /// transitions[t - 2] is L_{t-1} for t = 2..T.
  std::vector<double> transitions;
  /// L_0: -log p_theta(x0 | x1) under a continuous Gaussian decoder.
  double reconstruction = 0.0;

  double total() const {
    double s = prior + reconstruction;
    for (double v : transitions) s += v;
    return s;
  }
};

/// Variational bound terms for data drawn from a single isotropic Gaussian
/// component, averaged over `num_mc` forward draws per step. Any other data
/// law has no closed-form KL here and is rejected.
template <class T, EpsilonModel<T> M>
VlbTerms vlb_terms(const M& model, std::span<const MixtureComponent<T>> data_law,
                   const NoiseSchedule& schedule, int num_mc, Rng& rng,
                   ReverseVariance variance = ReverseVariance::posterior) {
  if (data_law.size() != 1) {
    throw UnsupportedError("vlb_terms: only single-Gaussian data laws have closed-form terms");
  }
  if (num_mc < 1) throw std::invalid_argument("vlb_terms: num_mc must be >= 1");
  const auto& law = data_law[0];
  const std::size_t d = law.mu.numel();
  const double s0 = law.sigma0;
  const int num_t = schedule.steps();
  const auto n = static_cast<std::size_t>(num_mc);
  Shape batch_shape = law.mu.shape();
  batch_shape.insert(batch_shape.begin(), n);

  VlbTerms out;
  {
    const double ab = schedule.alpha_bar(num_t);
    for (std::size_t i = 0; i < d; ++i) {
      const double m2 = static_cast<double>(law.mu[i]) * static_cast<double>(law.mu[i]) + s0 * s0;
      out.prior += 0.5 * ((1.0 - ab) + ab * m2 - 1.0 - std::log1p(-ab));
    }
  }

  auto draw = [&](int t) {
    BasicGrid<T> x0(batch_shape), eps(batch_shape);
    for (std::size_t i = 0; i < x0.numel(); ++i) {
      x0[i] = static_cast<T>(static_cast<double>(law.mu[i % d]) + s0 * rng.normal());
      eps[i] = static_cast<T>(rng.normal());
    }
    auto xt = q_sample(x0, t, eps, schedule);
    return std::pair{std::move(x0), std::move(xt)};
  };

  out.transitions.reserve(static_cast<std::size_t>(std::max(0, num_t - 1)));
  for (int t = 2; t <= num_t; ++t) {
    auto [x0, xt] = draw(t);
    const auto post = posterior_params(x0, xt, t, schedule);
    const auto mu_theta = reverse_mean(xt, model.predict(xt, static_cast<double>(t)), t, schedule);
    const double var = reverse_variance(schedule, t, variance);
    const double ratio = post.variance / var;
    const double per_dim = ratio - 1.0 - std::log(ratio);
    const double sq = detail::squared_error(post.mean, mu_theta);
    out.transitions.push_back(0.5 * (per_dim * static_cast<double>(d) + sq / (var * n)));
  }

  {
    auto [x0, x1] = draw(1);
    const auto mu_theta = reverse_mean(x1, model.predict(x1, 1.0), 1, schedule);
    const double var = reverse_variance(schedule, 1, variance);
    const double sq = detail::squared_error(x0, mu_theta);
    out.reconstruction =
        0.5 * (static_cast<double>(d) * std::log(2.0 * std::numbers::pi * var) + sq / (var * n));
  }
  return out;
}

/// Records the batched simplified loss mean((eps - model(x_t))^2) on `tape`
/// with the model parameters given as tape variables.
template <class T, class Model>
Var<T> simple_loss_graph(const Model& model, Tape<T>& tape, std::span<const Var<T>> params, BasicGrid<T> xt,
                         BasicGrid<T> eps, std::span<const double> times, std::span<const ClassLabel> labels) {
  auto pred = model.forward(tape, params, tape.constant(std::move(xt)), times, labels);
  return ad::mse(pred, tape.constant(std::move(eps)));
}

struct TrainConfig {
  int epochs = 500;
  int batch_size = 16;
  double label_dropout = 0.1;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(label_dropout >= 0.0 && label_dropout <= 1.0)) {
      throw std::invalid_argument("train config: label_dropout must be in [0, 1]");
    }
  }
};

struct FitResult {
  std::vector<double> loss_trace;
  /// Number of training examples whose label was replaced by the null label.
  std::size_t dropped_labels = 0;
  std::size_t examples_seen = 0;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

/// Trains an epsilon model on the simplified objective. Each example gets
/// t ~ U{1..T}, eps ~ N(0, I) and, with probability label_dropout, the null
/// label. Deterministic for a fixed seed.
template <class T, class Model>
FitResult fit(Model& model, std::span<const LabeledSample<T>> dataset, const TrainConfig& config,
              const NoiseSchedule& schedule, const EpochCallback& on_epoch = {}) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("fit: empty dataset");
  const auto& mc = model.config();
  for (const auto& s : dataset) {
    if (s.class_id < 0 || static_cast<std::size_t>(s.class_id) >= mc.num_classes) {
      throw std::out_of_range("fit: class id " + std::to_string(s.class_id) + " outside [0, " +
                              std::to_string(mc.num_classes) + ")");
    }
    require_same_shape(s.spectrogram.shape(), dataset[0].spectrogram.shape(), "fit dataset");
  }
  const Shape sample_shape = dataset[0].spectrogram.shape();
  const std::size_t per = dataset[0].spectrogram.numel();
  const std::size_t channels = mc.in_channels;
  const std::size_t h = mc.height, w = mc.width;
  if (per != channels * h * w) {
    throw ShapeError("fit: samples of shape " + shape_string(sample_shape) +
                     " do not match the model input " + std::to_string(channels) + "x" +
                     std::to_string(h) + "x" + std::to_string(w));
  }

  Rng rng(config.seed, 0xf17);
  AdamWState<T> opt(config.optimizer);
  FitResult result;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int T_steps = schedule.steps();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t nb = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      BasicGrid<T> xt({nb, channels, h, w}), eps({nb, channels, h, w});
      std::vector<double> times(nb);
      std::vector<ClassLabel> labels(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& s = dataset[order[start + b]];
        const int t = static_cast<int>(rng.integer(1, T_steps));
        times[b] = t;
        const double a = schedule.sqrt_alpha_bar(t), sg = schedule.sigma(t);
        for (std::size_t i = 0; i < per; ++i) {
          const double e = rng.normal();
          eps[b * per + i] = static_cast<T>(e);
          xt[b * per + i] = static_cast<T>(a * static_cast<double>(s.spectrogram[i]) + sg * e);
        }
        if (rng.bernoulli(config.label_dropout)) {
          ++result.dropped_labels;
        } else {
          labels[b] = s.class_id;
        }
      }
      result.examples_seen += nb;

      Tape<T> tape;
      std::vector<Var<T>> p;
      p.reserve(model.parameters().size());
      for (const auto& g : model.parameters()) p.push_back(tape.parameter(g));
      auto loss = simple_loss_graph(model, tape, std::span<const Var<T>>(p), std::move(xt), std::move(eps), times, labels);
      const double lv = static_cast<double>(loss.value().item());
      if (!std::isfinite(lv)) {
        throw NonFiniteError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                             std::to_string(start));
      }
      tape.backward(loss);
      std::vector<BasicGrid<T>> grads;
      grads.reserve(p.size());
      for (auto v : p) grads.push_back(tape.grad(v));
      adamw_step(model.parameters(), grads, opt);
      epoch_loss += lv * static_cast<double>(nb);
    }
    const double mean_loss = epoch_loss / static_cast<double>(dataset.size());
    result.loss_trace.push_back(mean_loss);
    if (on_epoch) on_epoch(epoch, mean_loss);
  }
  return result;
}

template <class T, class Model>
FitResult fit(Model& model, const std::vector<LabeledSample<T>>& dataset, const TrainConfig& config,
              const NoiseSchedule& schedule, const EpochCallback& on_epoch = {}) {
  return fit<T>(model, std::span<const LabeledSample<T>>(dataset), config, schedule, on_epoch);
}

inline void write_loss_trace(const std::filesystem::path& path, std::span<const double> trace) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,mean_loss\n";
  out.precision(9);
  for (std::size_t i = 0; i < trace.size(); ++i) out << (i + 1) << ',' << trace[i] << '\n';
}

}  // namespace diffaug
