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

// Solver benchmark on the 1-D Gaussian oracle: data ~ N(mu, s0^2), where the
// exact denoiser is known and every sampler should reproduce N(mu, s0^2).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "diffaug/denoisers/analytic.hpp"
#include "diffaug/samplers.hpp"
#include "diffaug/schedule.hpp"

namespace diffaug {

inline double normal_cdf(double x, double mean, double sd) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

/// W1 between the empirical law of xs and N(mean, sd^2), as the integral of
/// |F_n - Phi| (Simpson on each gap between order statistics).
inline double w1_to_normal(std::vector<double> xs, double mean, double sd) {
  if (xs.empty() || !(sd > 0.0)) throw std::invalid_argument("w1_to_normal: need samples and sd > 0");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  auto piece = [&](double a, double b, double level) {
    if (!(b > a)) return 0.0;
    constexpr int m = 16;  // even
    const double h = (b - a) / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
      const double v = std::abs(level - normal_cdf(a + i * h, mean, sd));
      s += v * (i == 0 || i == m ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    return s * h / 3.0;
  };
  const double lo = std::min(xs.front(), mean - 12.0 * sd), hi = std::max(xs.back(), mean + 12.0 * sd);
  double total = piece(lo, xs.front(), 0.0);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) total += piece(xs[i], xs[i + 1], static_cast<double>(i + 1) / n);
  total += piece(xs.back(), hi, 1.0);
  return total;
}

struct SolverBenchRow {
  SolverMethod method;
  int steps;
  double w1;
  double mean;
  double sd;
};

struct SolverBenchConfig {
  double mu = 3.0;
  double sigma0 = 0.5;
  std::size_t samples = 10000;
  TimeSpacing spacing = TimeSpacing::uniform_t;
  std::uint64_t seed = 0;
};

inline SolverBenchRow bench_solver_once(const NoiseSchedule& schedule, const SolverBenchConfig& c, SolverMethod method,
                                        int steps) {
  const AnalyticGaussianModel<double> model(BasicGrid<double>({1}, {c.mu}), c.sigma0, schedule);
  SolverConfig sc;
  sc.method = method;
  sc.num_steps = steps;
  sc.spacing = c.spacing;
  sc.seed = c.seed;
  sc.batch = 4096;
  const auto xs = sample<double>(model, schedule, sc, Shape{1}, c.samples);
  std::vector<double> v;
  v.reserve(xs.size());
  for (const auto& g : xs) v.push_back(g[0]);
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double x : v) s += (x - m) * (x - m);
  return {method, steps, w1_to_normal(v, c.mu, c.sigma0), m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace diffaug
