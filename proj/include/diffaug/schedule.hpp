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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffaug {

enum class TimeSpacing { uniform_t, uniform_lambda };

/// Discrete variance-preserving noise schedule over t = 1..T.
///
/// Integer accessors read the tables directly; index 0 is the clean state
/// (alpha_bar = 1). The `*_at` accessors accept fractional t in [1, T]: the
/// half-logSNR lambda is interpolated linearly between grid points and the
/// signal/noise coefficients are recovered from it, so lambda stays monotone
/// and t_of_lambda is its exact inverse.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int T, double beta_start = 1e-4, double beta_end = 0.02) {
    if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
      throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
      betas[static_cast<std::size_t>(i)] =
          T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (T - 1);
    }
    return NoiseSchedule(std::move(betas));
  }

  explicit NoiseSchedule(std::vector<double> betas) {
    const std::size_t T = betas.size();
    if (T == 0) throw std::invalid_argument("noise schedule needs at least one step");
    betas_.assign(T + 1, 0.0);
    alpha_bars_.assign(T + 1, 1.0);
    lambdas_.assign(T + 1, INFINITY);
    double prod = 1.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double b = betas[t - 1];
      if (!(b > 0.0 && b < 1.0)) {
        throw std::invalid_argument("noise schedule: beta_" + std::to_string(t) + " not in (0,1)");
      }
      betas_[t] = b;
      prod *= 1.0 - b;
      alpha_bars_[t] = prod;
      lambdas_[t] = 0.5 * (std::log(prod) - std::log1p(-prod));
    }
  }

  int steps() const { return static_cast<int>(betas_.size()) - 1; }

  double beta(int t) const { return betas_.at(check(t, 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t, 0)); }
  /// sqrt(alpha_bar): the signal coefficient of the forward marginal.
  double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
  /// sqrt(1 - alpha_bar): the noise standard deviation of the forward marginal.
  double sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }
  double lambda(int t) const { return lambdas_.at(check(t, 1)); }

  double lambda_min() const { return lambdas_.back(); }
  double lambda_max() const { return lambdas_[1]; }

  double lambda_at(double t) const {
    const auto [i, frac] = locate(t);
    if (frac == 0.0) return lambdas_[i];
    return lambdas_[i] + frac * (lambdas_[i + 1] - lambdas_[i]);
  }

  /// alpha_bar at fractional t. alpha_bar_at(0) is 1 (clean data).
  double alpha_bar_at(double t) const {
    if (t == 0.0) return 1.0;
    const auto [i, frac] = locate(t);
    if (frac == 0.0) return alpha_bars_[i];
    return sigmoid(2.0 * lambda_at(t));
  }

  double sqrt_alpha_bar_at(double t) const {
    if (t == 0.0) return 1.0;
    const auto [i, frac] = locate(t);
    if (frac == 0.0) return std::sqrt(alpha_bars_[i]);
    return std::sqrt(sigmoid(2.0 * lambda_at(t)));
  }

  double sigma_at(double t) const {
    if (t == 0.0) return 0.0;
    const auto [i, frac] = locate(t);
    if (frac == 0.0) return std::sqrt(1.0 - alpha_bars_[i]);
    return std::sqrt(sigmoid(-2.0 * lambda_at(t)));
  }

  /// Inverse of lambda_at. Exact (returns the integer) on grid values.
  double t_of_lambda(double lam) const {
    const int T = steps();
    if (!(lam <= lambdas_[1] && lam >= lambdas_[static_cast<std::size_t>(T)])) {
      throw std::out_of_range("t_of_lambda: lambda " + std::to_string(lam) + " outside [" +
                              std::to_string(lambda_min()) + ", " +
                              std::to_string(lambda_max()) + "]");
    }
    // lambdas_ is strictly decreasing over 1..T; find i with
    // lambdas_[i] >= lam > lambdas_[i+1].
    std::size_t lo = 1, hi = static_cast<std::size_t>(T);
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (lambdas_[mid] >= lam) lo = mid; else hi = mid;
    }
    if (lambdas_[lo] == lam) return static_cast<double>(lo);
    if (lambdas_[hi] == lam) return static_cast<double>(hi);
    return static_cast<double>(lo) + (lambdas_[lo] - lam) / (lambdas_[lo] - lambdas_[hi]);
  }

  /// Solver time points t_N = T > ... > t_0 = 1 (num_steps + 1 values).
  std::vector<double> solver_times(int num_steps, TimeSpacing spacing = TimeSpacing::uniform_t) const {
    const int T = steps();
    if (num_steps < 1 || num_steps > T) {
      throw std::invalid_argument("select_solver_times: num_steps must be in [1, " +
                                  std::to_string(T) + "], got " + std::to_string(num_steps));
    }
    std::vector<double> ts(static_cast<std::size_t>(num_steps) + 1);
    const double t_max = T, t_min = kFinalTime;
    for (int i = 0; i <= num_steps; ++i) {
      const double f = static_cast<double>(i) / num_steps;
      if (spacing == TimeSpacing::uniform_t || T == 1) {
        ts[static_cast<std::size_t>(i)] = t_max + f * (t_min - t_max);
      } else {
        const double lam = std::clamp(lambda_min() + f * (lambda_max() - lambda_min()), lambda_min(), lambda_max());
        ts[static_cast<std::size_t>(i)] = t_of_lambda(lam);
      }
    }
    ts.front() = t_max;
    ts.back() = t_min;
    return ts;
  }

  /// Last time at which a model is evaluated; the final update to clean data
  /// from here is noise-free.
  static constexpr double kFinalTime = 1.0;

 private:
  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  std::size_t check(int t, int lo) const {
    if (t < lo || t > steps()) {
      throw std::out_of_range("time index " + std::to_string(t) + " outside [" +
                              std::to_string(lo) + ", " + std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(t);
  }

  struct Location {
    std::size_t index;
    double frac;
  };

  Location locate(double t) const {
    const double T = steps();
    if (!(t >= 1.0 && t <= T)) {
      throw std::out_of_range("time " + std::to_string(t) + " outside [1, " +
                              std::to_string(steps()) + "]");
    }
    const double fl = std::floor(t);
    auto i = static_cast<std::size_t>(fl);
    double frac = t - fl;
    if (i == static_cast<std::size_t>(steps())) frac = 0.0;
    return {i, frac};
  }

  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
  std::vector<double> lambdas_;
};

}  // namespace diffaug
