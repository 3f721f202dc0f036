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

// Reverse-time samplers. Notation in comments: a = sqrt(alpha_bar),
// s = sqrt(1 - alpha_bar), lambda = log(a / s), h = lambda_next - lambda_prev.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffaug/denoisers/model.hpp"
#include "diffaug/numerics/rng.hpp"
#include "diffaug/schedule.hpp"

namespace diffaug {

enum class SolverMethod { ancestral, first_order, dpm2s, dpm2m };
enum class Parameterization { data, noise };

struct Thresholding {
  enum class Mode { none, fixed, dynamic };
  Mode mode = Mode::none;
  double bound = 1.0;
  double percentile = 0.995;

  static Thresholding none() { return {}; }
  static Thresholding fixed(double bound) { return {Mode::fixed, bound, 0.995}; }
  static Thresholding dynamic(double percentile) { return {Mode::dynamic, 1.0, percentile}; }

  void validate() const {
    if (mode == Mode::fixed && !(bound > 0.0)) throw std::invalid_argument("static threshold bound must be > 0");
    if (mode == Mode::dynamic && !(percentile > 0.0 && percentile <= 1.0)) {
      throw std::invalid_argument("dynamic threshold percentile must be in (0, 1]");
    }
  }
};

struct SolverConfig {
  SolverMethod method = SolverMethod::dpm2m;
  int num_steps = 20;
  double guidance_scale = 0.0;
  Thresholding thresholding;
  std::uint64_t seed = 0;
  Parameterization parameterization = Parameterization::data;
  TimeSpacing spacing = TimeSpacing::uniform_t;
  /// Trajectories evaluated together per model call.
  std::size_t batch = 64;

  void validate() const {
    if (num_steps < 1) throw std::invalid_argument("solver: num_steps must be >= 1");
    if (!(guidance_scale >= -1.0)) throw std::invalid_argument("solver: guidance scale must be >= -1");
    if (method == SolverMethod::dpm2m && parameterization == Parameterization::noise) {
      throw std::invalid_argument("solver: dpm2m is only defined in data-prediction form");
    }
    if (batch == 0) throw std::invalid_argument("solver: batch must be >= 1");
    thresholding.validate();
  }
};

/// (w + 1) eps(x, t, y) - w eps(x, t). With w == 0 or no labels only one
/// branch is evaluated.
template <class T, EpsilonModel<T> M>
BasicGrid<T> guided_eps(const M& model, const BasicGrid<T>& x, double t,
                        std::span<const ClassLabel> labels, double w) {
  const bool conditional = std::any_of(labels.begin(), labels.end(), [](const ClassLabel& l) { return l.has_value(); });
  if (!conditional) return model.predict(x, t, {});
  if (w == 0.0) return model.predict(x, t, labels);
  const BasicGrid<T> cond = model.predict(x, t, labels);
  const BasicGrid<T> uncond = model.predict(x, t, {});
  BasicGrid<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>((w + 1.0) * static_cast<double>(cond[i]) - w * static_cast<double>(uncond[i]));
  }
  return out;
}

/// Applies thresholding independently to each sample of the leading axis.
template <class T>
void apply_thresholding(BasicGrid<T>& x0, const Thresholding& th) {
  if (th.mode == Thresholding::Mode::none) return;
  if (th.mode == Thresholding::Mode::fixed) {
    const T b = static_cast<T>(th.bound);
    for (auto& v : x0.data()) v = std::clamp(v, -b, b);
    return;
  }
  const std::size_t n = x0.rank() > 1 ? x0.dim(0) : 1;
  const std::size_t d = x0.numel() / n;
  std::vector<double> mags(d);
  for (std::size_t b = 0; b < n; ++b) {
    T* p = x0.data().data() + b * d;
    for (std::size_t i = 0; i < d; ++i) mags[i] = std::abs(static_cast<double>(p[i]));
    std::sort(mags.begin(), mags.end());
    const double pos = th.percentile * static_cast<double>(d - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, d - 1);
    const double s = mags[lo] + (pos - static_cast<double>(lo)) * (mags[hi] - mags[lo]);
    if (s <= 1.0) continue;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = static_cast<T>(std::clamp(static_cast<double>(p[i]), -s, s) / s);
    }
  }
}

/// Data prediction (x_t - s eps) / a followed by thresholding.
template <class T>
BasicGrid<T> eps_to_x0(const BasicGrid<T>& xt, const BasicGrid<T>& eps, double t,
                       const NoiseSchedule& schedule, const Thresholding& th = {}) {
  require_same_shape(xt.shape(), eps.shape(), "eps_to_x0");
  const double a = schedule.sqrt_alpha_bar_at(t), s = schedule.sigma_at(t);
  if (!(a > 0.0)) throw std::domain_error("eps_to_x0: alpha_bar is zero at t = " + std::to_string(t));
  BasicGrid<T> x0(xt.shape());
  for (std::size_t i = 0; i < xt.numel(); ++i) {
    x0[i] = static_cast<T>((static_cast<double>(xt[i]) - s * static_cast<double>(eps[i])) / a);
  }
  apply_thresholding(x0, th);
  return x0;
}

template <class T>
struct SamplerState {
  BasicGrid<T> x;
  double t = 0.0;
  /// Data prediction and step size of the previous multistep update.
  std::optional<BasicGrid<T>> prev_x0;
  double prev_h = 0.0;
  /// One noise stream per trajectory (ancestral sampling only).
  std::vector<Rng> rngs;
};

/// A noise field eps(x, t) bound to a model, label batch and guidance scale.
template <class T, EpsilonModel<T> M>
struct GuidedField {
  const M& model;
  std::span<const ClassLabel> labels;
  double w = 0.0;

  BasicGrid<T> operator()(const BasicGrid<T>& x, double t) const { return guided_eps<T>(model, x, t, labels, w); }
};

namespace detail {

inline double step_size(const NoiseSchedule& s, double t_prev, double t_next) {
  if (!(t_next < t_prev)) {
    throw std::invalid_argument("solver step must move to smaller t (" + std::to_string(t_prev) + " -> " +
                                std::to_string(t_next) + ")");
  }
  return s.lambda_at(t_next) - s.lambda_at(t_prev);
}

/// out = cx * x + cy * y
template <class T>
BasicGrid<T> lincomb(double cx, const BasicGrid<T>& x, double cy, const BasicGrid<T>& y) {
  BasicGrid<T> out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    out[i] = static_cast<T>(cx * static_cast<double>(x[i]) + cy * static_cast<double>(y[i]));
  }
  return out;
}

template <class T>
void require_finite(const BasicGrid<T>& x, const char* where) {
  if (!x.all_finite()) throw NonFiniteError(std::string(where) + ": non-finite sampler state");
}

}  // namespace detail

/// One reverse step of the stochastic chain from state.t to t_next using
/// mu = (x - b / s_prev * eps) / sqrt(1 - b), b = 1 - alpha_bar_prev / alpha_bar_next,
/// plus posterior-variance noise. t_next == 0 is the final, noise-free step.
template <class T, class Field>
void ancestral_step(const Field& eps_fn, const NoiseSchedule& schedule, SamplerState<T>& st, double t_next) {
  if (!(t_next < st.t) || t_next < 0.0) {
    throw std::invalid_argument("ancestral_step: invalid target time " + std::to_string(t_next));
  }
  const BasicGrid<T> eps = eps_fn(st.x, st.t);
  const double ab_prev = schedule.alpha_bar_at(st.t), ab_next = schedule.alpha_bar_at(t_next);
  const double alpha_eff = ab_prev / ab_next, beta_eff = 1.0 - alpha_eff;
  const double k = beta_eff / std::sqrt(1.0 - ab_prev), inv = 1.0 / std::sqrt(alpha_eff);
  BasicGrid<T> mean(st.x.shape());
  for (std::size_t i = 0; i < mean.numel(); ++i) {
    mean[i] = static_cast<T>(inv * (static_cast<double>(st.x[i]) - k * static_cast<double>(eps[i])));
  }
  if (t_next > 0.0) {
    const double sd = std::sqrt(beta_eff * (1.0 - ab_next) / (1.0 - ab_prev));
    const std::size_t n = st.rngs.size();
    if (n == 0 || mean.numel() % n != 0) throw std::logic_error("ancestral_step: one rng per trajectory required");
    const std::size_t d = mean.numel() / n;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < d; ++i)
        mean[b * d + i] = static_cast<T>(static_cast<double>(mean[b * d + i]) + sd * st.rngs[b].normal());
  }
  st.x = std::move(mean);
  st.t = t_next;
  detail::require_finite(st.x, "ancestral_step");
}

/// First-order exponential integrator.
///   noise form: x' = (a'/a) x - s' (e^h - 1) eps
///   data form:  x' = (s'/s) x - a' (e^-h - 1) x0_pred
template <class T, class Field>
void first_order_step(const Field& eps_fn, const NoiseSchedule& schedule, SamplerState<T>& st, double t_next,
                      const Thresholding& th = {}, Parameterization param = Parameterization::data) {
  const double h = detail::step_size(schedule, st.t, t_next);
  const double a_p = schedule.sqrt_alpha_bar_at(st.t), s_p = schedule.sigma_at(st.t);
  const double a_n = schedule.sqrt_alpha_bar_at(t_next), s_n = schedule.sigma_at(t_next);
  const BasicGrid<T> eps = eps_fn(st.x, st.t);
  if (param == Parameterization::noise) {
    st.x = detail::lincomb(a_n / a_p, st.x, -s_n * std::expm1(h), eps);
  } else {
    const auto x0 = eps_to_x0(st.x, eps, st.t, schedule, th);
    st.x = detail::lincomb(s_n / s_p, st.x, -a_n * std::expm1(-h), x0);
  }
  st.t = t_next;
  detail::require_finite(st.x, "first_order_step");
}

/// Second-order single-step update with one extra evaluation at the
/// lambda-midpoint s. The midpoint difference stands in for the first
/// derivative of the integrand:
///   noise form: x' = (a'/a) x - s'(e^h - 1) e0 - s'(e^h - 1 - h) (e_s - e0) / (h/2)
///   data form:  x' = (s'/s) x + a'(1 - e^-h) d0 + a'(h - 1 + e^-h) (d_s - d0) / (h/2)
/// Both are exact when the integrand is linear in lambda.
template <class T, class Field>
void dpm2s_step(const Field& eps_fn, const NoiseSchedule& schedule, SamplerState<T>& st, double t_next,
                const Thresholding& th = {}, Parameterization param = Parameterization::data) {
  const double h = detail::step_size(schedule, st.t, t_next);
  const double lam_p = schedule.lambda_at(st.t);
  const double t_mid = schedule.t_of_lambda(lam_p + 0.5 * h);
  const double a_p = schedule.sqrt_alpha_bar_at(st.t), s_p = schedule.sigma_at(st.t);
  const double a_m = schedule.sqrt_alpha_bar_at(t_mid), s_m = schedule.sigma_at(t_mid);
  const double a_n = schedule.sqrt_alpha_bar_at(t_next), s_n = schedule.sigma_at(t_next);

  const BasicGrid<T> eps0 = eps_fn(st.x, st.t);
  if (param == Parameterization::noise) {
    const auto u = detail::lincomb(a_m / a_p, st.x, -s_m * std::expm1(0.5 * h), eps0);
    const BasicGrid<T> eps_m = eps_fn(u, t_mid);
    const double c1 = -s_n * std::expm1(h);
    const double c2 = -s_n * (std::expm1(h) - h) / (0.5 * h);
    BasicGrid<T> out(st.x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double e0 = static_cast<double>(eps0[i]);
      out[i] = static_cast<T>((a_n / a_p) * static_cast<double>(st.x[i]) + c1 * e0 +
                              c2 * (static_cast<double>(eps_m[i]) - e0));
    }
    st.x = std::move(out);
  } else {
    const auto d0 = eps_to_x0(st.x, eps0, st.t, schedule, th);
    const auto u = detail::lincomb(s_m / s_p, st.x, -a_m * std::expm1(-0.5 * h), d0);
    const auto d_m = eps_to_x0(u, eps_fn(u, t_mid), t_mid, schedule, th);
    const double phi1 = -std::expm1(-h);
    const double c1 = a_n * phi1;
    const double c2 = a_n * (h - phi1) / (0.5 * h);
    BasicGrid<T> out(st.x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
      const double v0 = static_cast<double>(d0[i]);
      out[i] = static_cast<T>((s_n / s_p) * static_cast<double>(st.x[i]) + c1 * v0 +
                              c2 * (static_cast<double>(d_m[i]) - v0));
    }
    st.x = std::move(out);
  }
  st.t = t_next;
  st.prev_x0.reset();
  detail::require_finite(st.x, "dpm2s_step");
}

/// Second-order multistep update in data-prediction form. With r the ratio
/// of the previous to the current step size,
///   D  = (1 + 1/(2r)) x0_cur - 1/(2r) x0_prev
///   x' = (s'/s) x - a' (e^-h - 1) D
/// An empty history falls back to the first-order data update.
template <class T, class Field>
void dpm2m_step(const Field& eps_fn, const NoiseSchedule& schedule, SamplerState<T>& st, double t_next,
                const Thresholding& th = {}) {
  const double h = detail::step_size(schedule, st.t, t_next);
  const double s_p = schedule.sigma_at(st.t);
  const double a_n = schedule.sqrt_alpha_bar_at(t_next), s_n = schedule.sigma_at(t_next);
  auto x0 = eps_to_x0(st.x, eps_fn(st.x, st.t), st.t, schedule, th);
  if (!st.prev_x0) {
    st.x = detail::lincomb(s_n / s_p, st.x, -a_n * std::expm1(-h), x0);
  } else {
    const double r = st.prev_h / h;
    const auto d = detail::lincomb(1.0 + 0.5 / r, x0, -0.5 / r, *st.prev_x0);
    st.x = detail::lincomb(s_n / s_p, st.x, -a_n * std::expm1(-h), d);
  }
  st.prev_x0 = std::move(x0);
  st.prev_h = h;
  st.t = t_next;
  detail::require_finite(st.x, "dpm2m_step");
}

/// Runs the configured solver across `times` (decreasing, times[0] == state.t).
/// The second-order methods take their last interval with the first-order
/// update, which stays stable where sigma is small and h is large.
template <class T, class Field>
void integrate(const Field& eps_fn, const NoiseSchedule& schedule, const SolverConfig& config,
               SamplerState<T>& st, std::span<const double> times) {
  for (std::size_t i = 1; i < times.size(); ++i) {
    const bool last = i + 1 == times.size();
    if (last && (config.method == SolverMethod::dpm2s || config.method == SolverMethod::dpm2m)) {
      first_order_step(eps_fn, schedule, st, times[i], config.thresholding, config.parameterization);
      continue;
    }
    switch (config.method) {
      case SolverMethod::ancestral: ancestral_step(eps_fn, schedule, st, times[i]); break;
      case SolverMethod::first_order:
        first_order_step(eps_fn, schedule, st, times[i], config.thresholding, config.parameterization);
        break;
      case SolverMethod::dpm2s:
        dpm2s_step(eps_fn, schedule, st, times[i], config.thresholding, config.parameterization);
        break;
      case SolverMethod::dpm2m: dpm2m_step(eps_fn, schedule, st, times[i], config.thresholding); break;
    }
  }
}

/// Full trajectory from x_T to data: solver steps down to the final time
/// followed by the noise-free update to clean data.
template <class T, class Field>
BasicGrid<T> solve(const Field& eps_fn, const NoiseSchedule& schedule, const SolverConfig& config,
                   SamplerState<T>& st) {
  const auto times = schedule.solver_times(config.num_steps, config.spacing);
  st.t = times.front();
  integrate(eps_fn, schedule, config, st, times);
  if (config.method == SolverMethod::ancestral) {
    ancestral_step(eps_fn, schedule, st, 0.0);
    return st.x;
  }
  const Thresholding th = config.parameterization == Parameterization::data ? config.thresholding : Thresholding{};
  return eps_to_x0(st.x, eps_fn(st.x, st.t), st.t, schedule, th);
}

/// Draws one sample per label. Trajectory i starts from N(0, I) noise of
/// the stream (seed, i), so results depend only on (seed, index).
template <class T, EpsilonModel<T> M>
std::vector<BasicGrid<T>> sample(const M& model, const NoiseSchedule& schedule, const SolverConfig& config,
                                 const Shape& sample_shape, std::span<const ClassLabel> labels) {
  config.validate();
  if (labels.empty()) throw std::invalid_argument("sample: n must be >= 1");
  std::vector<BasicGrid<T>> out;
  out.reserve(labels.size());
  const std::size_t d = shape_numel(sample_shape);
  for (std::size_t start = 0; start < labels.size(); start += config.batch) {
    const std::size_t nb = std::min(config.batch, labels.size() - start);
    Shape bs = sample_shape;
    bs.insert(bs.begin(), nb);
    SamplerState<T> st;
    st.x = BasicGrid<T>(bs);
    for (std::size_t b = 0; b < nb; ++b) {
      Rng rng(config.seed, start + b);
      for (std::size_t i = 0; i < d; ++i) st.x[b * d + i] = static_cast<T>(rng.normal());
      st.rngs.push_back(rng);
    }
    const auto batch_labels = labels.subspan(start, nb);
    const GuidedField<T, M> field{model, batch_labels, config.guidance_scale};
    const auto x0 = solve(field, schedule, config, st);
    for (std::size_t b = 0; b < nb; ++b) out.push_back(batch_item(x0, b));
  }
  return out;
}

template <class T, EpsilonModel<T> M>
std::vector<BasicGrid<T>> sample(const M& model, const NoiseSchedule& schedule, const SolverConfig& config,
                                 const Shape& sample_shape, std::size_t n, ClassLabel label = {}) {
  const std::vector<ClassLabel> labels(n, label);
  return sample<T>(model, schedule, config, sample_shape, std::span<const ClassLabel>(labels));
}

inline const char* method_name(SolverMethod m) {
  switch (m) {
    case SolverMethod::ancestral: return "ancestral";
    case SolverMethod::first_order: return "first_order";
    case SolverMethod::dpm2s: return "dpm2s";
    case SolverMethod::dpm2m: return "dpm2m";
  }
  return "?";
}

inline SolverMethod parse_method(const std::string& s) {
  if (s == "ancestral") return SolverMethod::ancestral;
  if (s == "first_order" || s == "ddim") return SolverMethod::first_order;
  if (s == "dpm2s") return SolverMethod::dpm2s;
  if (s == "dpm2m") return SolverMethod::dpm2m;
  throw std::invalid_argument("unknown solver method '" + s + "'");
}

/// "none", "static[:bound]" or "dynamic[:percentile]".
inline Thresholding parse_thresholding(const std::string& s) {
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
  Thresholding th;
  if (kind == "none" && arg.empty()) return th;
  if (kind == "static") {
    th = Thresholding::fixed(arg.empty() ? 1.0 : std::stod(arg));
  } else if (kind == "dynamic") {
    th = Thresholding::dynamic(arg.empty() ? 0.995 : std::stod(arg));
  } else {
    throw std::invalid_argument("unknown thresholding '" + s + "'");
  }
  th.validate();
  return th;
}

}  // namespace diffaug
