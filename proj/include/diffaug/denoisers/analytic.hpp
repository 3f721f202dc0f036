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

// Closed-form E[eps | x_t] for Gaussian and Gaussian-mixture data under the
// variance-preserving forward marginal. These are the verification oracles
// for the samplers and training objectives.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "diffaug/denoisers/model.hpp"
#include "diffaug/schedule.hpp"

namespace diffaug {

/// Data ~ N(mu, sigma0^2 I) with mu given per element.
template <class T>
class AnalyticGaussianModel {
 public:
  AnalyticGaussianModel(BasicGrid<T> mu, double sigma0, NoiseSchedule schedule)
      : mu_(std::move(mu)), sigma0_(sigma0), schedule_(std::move(schedule)) {
    if (!(sigma0 >= 0.0)) throw std::invalid_argument("analytic gaussian: sigma0 must be >= 0");
  }

  const BasicGrid<T>& mu() const { return mu_; }
  double sigma0() const { return sigma0_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  /// eps_hat = (x_t - a*mu) * s / (a^2 sigma0^2 + s^2), a = sqrt(alpha_bar), s = sigma.
  BasicGrid<T> predict(const BasicGrid<T>& x, double t, std::span<const ClassLabel> = {}) const {
    const std::size_t d = mu_.numel();
    if (x.numel() % d != 0) {
      throw ShapeError("analytic gaussian: input " + shape_string(x.shape()) +
                       " is not a batch of " + shape_string(mu_.shape()));
    }
    const double a = schedule_.sqrt_alpha_bar_at(t), s = schedule_.sigma_at(t);
    const double k = s / (a * a * sigma0_ * sigma0_ + s * s);
    BasicGrid<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      out[i] = static_cast<T>((static_cast<double>(x[i]) - a * static_cast<double>(mu_[i % d])) * k);
    }
    return out;
  }

 private:
  BasicGrid<T> mu_;
  double sigma0_;
  NoiseSchedule schedule_;
};

template <class T>
struct MixtureComponent {
  double weight;
  BasicGrid<T> mu;
  double sigma0;
  /// Class this component represents; labelled queries only see matching
  /// components.
  std::optional<int> class_id;
};

template <class T>
class AnalyticMixtureModel {
 public:
  AnalyticMixtureModel(std::vector<MixtureComponent<T>> components, NoiseSchedule schedule)
      : components_(std::move(components)), schedule_(std::move(schedule)) {
    if (components_.empty()) throw std::invalid_argument("analytic mixture: no components");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight > 0.0)) throw std::invalid_argument("analytic mixture: weights must be positive");
      if (!(c.sigma0 >= 0.0)) throw std::invalid_argument("analytic mixture: sigma0 must be >= 0");
      require_same_shape(c.mu.shape(), components_[0].mu.shape(), "analytic mixture");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("analytic mixture: weights must sum to 1");
    }
  }

  const std::vector<MixtureComponent<T>>& components() const { return components_; }
  const NoiseSchedule& schedule() const { return schedule_; }

  /// Posterior responsibilities of each component for one sample.
  std::vector<double> responsibilities(std::span<const T> x, double t, ClassLabel label) const {
    const double a = schedule_.sqrt_alpha_bar_at(t), s = schedule_.sigma_at(t);
    const double d = static_cast<double>(x.size());
    std::vector<double> logr(components_.size(), -INFINITY);
    bool any = false;
    for (std::size_t k = 0; k < components_.size(); ++k) {
      const auto& c = components_[k];
      if (label && c.class_id && *c.class_id != *label) continue;
      const double var = a * a * c.sigma0 * c.sigma0 + s * s;
      double sq = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = static_cast<double>(x[i]) - a * static_cast<double>(c.mu[i]);
        sq += r * r;
      }
      logr[k] = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var;
      any = true;
    }
    if (!any) throw std::invalid_argument("analytic mixture: no component for label " + std::to_string(*label));
    const double mx = *std::max_element(logr.begin(), logr.end());
    double z = 0.0;
    for (auto& l : logr) z += (l = std::exp(l - mx));
    for (auto& l : logr) l /= z;
    return logr;
  }

  BasicGrid<T> predict(const BasicGrid<T>& x, double t, std::span<const ClassLabel> labels = {}) const {
    const std::size_t d = components_[0].mu.numel();
    if (x.numel() % d != 0) {
      throw ShapeError("analytic mixture: input " + shape_string(x.shape()) + " is not a batch of " +
                       shape_string(components_[0].mu.shape()));
    }
    const std::size_t n = x.numel() / d;
    if (!labels.empty() && labels.size() != n) throw ShapeError("analytic mixture: label count mismatch");
    const double a = schedule_.sqrt_alpha_bar_at(t), s = schedule_.sigma_at(t);
    BasicGrid<T> out(x.shape());
    for (std::size_t b = 0; b < n; ++b) {
      std::span<const T> xb(x.data().data() + b * d, d);
      const auto r = responsibilities(xb, t, label_for(labels, b));
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < components_.size(); ++k) {
          if (r[k] == 0.0) continue;
          const auto& c = components_[k];
          const double kk = s / (a * a * c.sigma0 * c.sigma0 + s * s);
          acc += r[k] * (static_cast<double>(xb[i]) - a * static_cast<double>(c.mu[i])) * kk;
        }
        out[b * d + i] = static_cast<T>(acc);
      }
    }
    return out;
  }

 private:
  std::vector<MixtureComponent<T>> components_;
  NoiseSchedule schedule_;
};

}  // namespace diffaug
