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

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "diffaug/data/synthetic.hpp"
#include "diffaug/denoisers/analytic.hpp"
#include "diffaug/denoisers/condnet.hpp"
#include "diffaug/diffusion.hpp"
#include "diffaug/numerics/autodiff.hpp"

using namespace diffaug;
using Catch::Approx;
using G = BasicGrid<double>;

namespace {

const NoiseSchedule kSchedule = NoiseSchedule::linear(1000);

struct ConstantModel {
  G value;
  G predict(const G& x, double, std::span<const ClassLabel> = {}) const {
    G out(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = value[i % value.numel()];
    return out;
  }
};

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double ks_to_normal(std::vector<double> xs, double mean, double sd) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf((xs[i] - mean) / sd);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

CondNetConfig tiny_net() {
  CondNetConfig c;
  c.height = c.width = 8;
  c.base_width = 4;
  c.multipliers = {1, 2};
  c.time_dim = 4;
  c.num_classes = 2;
  return c;
}

}  // namespace

TEST_CASE("q_sample") {
  const G x0({3}, std::vector<double>{1.0, -2.0, 0.5});
  const G zero({3}, 0.0);
  const auto clean = q_sample(x0, 400, zero, kSchedule);
  for (std::size_t i = 0; i < 3; ++i) CHECK(clean[i] == Approx(kSchedule.sqrt_alpha_bar(400) * x0[i]));

  const G eps({3}, std::vector<double>{0.3, 0.1, -1.2});
  const auto terminal = q_sample(x0, 1000, eps, kSchedule);
  for (std::size_t i = 0; i < 3; ++i) CHECK(terminal[i] == Approx(eps[i]).margin(0.02));

  Rng rng(1);
  for (int t : {1, 250, 500, 1000}) {
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = q_sample(G::scalar(1.5), t, G::scalar(rng.normal()), kSchedule).item();
      s += v;
      s2 += v * v;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(var == Approx(1.0 - kSchedule.alpha_bar(t)).epsilon(0.02));
  }
}

TEST_CASE("posterior parameters") {
  const G x0({2}, std::vector<double>{0.8, -1.1});
  for (int t : {2, 10, 700}) {
    const auto xt = q_sample(x0, t, G({2}, 0.0), kSchedule);
    const auto p = posterior_params(x0, xt, t, kSchedule);
    for (std::size_t i = 0; i < 2; ++i) CHECK(p.mean[i] == Approx(kSchedule.sqrt_alpha_bar(t - 1) * x0[i]));
  }
  const auto p2 = posterior_params(x0, x0, 2, kSchedule);
  CHECK(p2.variance == Approx(kSchedule.beta(2) * (1 - kSchedule.alpha_bar(1)) / (1 - kSchedule.alpha_bar(2))));
  CHECK_THROWS_AS(posterior_params(x0, x0, 0, kSchedule), std::out_of_range);

  SECTION("posterior sampling reproduces the forward marginals") {
    const double m = 0.7, s0 = 0.4;
    for (int t : {5, 300}) {
      Rng rng(static_cast<std::uint64_t>(t));
      std::vector<double> xs;
      for (int i = 0; i < 20000; ++i) {
        const G x0s = G::scalar(m + s0 * rng.normal());
        const auto xt = q_sample(x0s, t, G::scalar(rng.normal()), kSchedule);
        const auto p = posterior_params(x0s, xt, t, kSchedule);
        xs.push_back(p.mean.item() + std::sqrt(p.variance) * rng.normal());
      }
      const double ab = kSchedule.alpha_bar(t - 1);
      CHECK(ks_to_normal(xs, std::sqrt(ab) * m, std::sqrt(ab * s0 * s0 + 1 - ab)) < 0.02);
    }
  }
}

TEST_CASE("simple loss") {
  Rng rng(2);
  const G x0({4}, std::vector<double>{0.1, 0.2, -0.3, 0.4});
  const G eps = rng.normal_grid<double>({4});
  CHECK(simple_loss(ConstantModel{eps}, x0, {}, 123, eps, kSchedule) == 0.0);

  const ConstantModel zero{G({1}, 0.0)};
  double acc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const int t = static_cast<int>(rng.integer(1, 1000));
    acc += simple_loss(zero, x0, {}, t, rng.normal_grid<double>({4}), kSchedule);
  }
  CHECK(acc / n == Approx(1.0).epsilon(0.05));
}

TEST_CASE("simple loss gradient matches finite differences") {
  const CondNetLite<double> model(tiny_net());
  Rng rng(3);
  const G xt = rng.normal_grid<double>({2, 1, 8, 8}), eps = rng.normal_grid<double>({2, 1, 8, 8});
  const std::vector<double> times = {10.0, 600.0};
  const std::vector<ClassLabel> labels = {0, std::nullopt};
  double worst = 0.0;
  for (std::size_t k : {std::size_t{0}, std::size_t{3}, model.parameters().size() - 2}) {
    auto f = [&](Tape<double>& tape, Var<double> target) {
      std::vector<Var<double>> p;
      for (std::size_t j = 0; j < model.parameters().size(); ++j) {
        p.push_back(j == k ? target : tape.constant(model.parameters()[j]));
      }
      return simple_loss_graph(model, tape, std::span<const Var<double>>(p), xt, eps, times, labels);
    };
    worst = std::max(worst, grad_check<double>(f, model.parameters()[k], 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("weighted loss term") {
  const int t = 500;
  const double b = kSchedule.beta(t);
  const double expected = b * b / (2.0 * (1.0 - b) * (1.0 - kSchedule.alpha_bar(t)) * b);
  CHECK(weighted_loss_coefficient(t, kSchedule, b) == Approx(expected).epsilon(1e-12));

  Rng rng(4);
  const G x0 = rng.normal_grid<double>({5}), eps = rng.normal_grid<double>({5});
  const ConstantModel model{G({1}, 0.3)};
  const double simple = simple_loss(model, x0, {}, t, eps, kSchedule);
  const double weighted = weighted_loss_term(model, x0, eps, t, kSchedule, b);
  CHECK(weighted == weighted_loss_coefficient(t, kSchedule, b) * simple * 5.0);

  const auto tiny = NoiseSchedule::linear(10, 1e-9, 1e-8);
  CHECK(weighted_loss_term(model, x0, eps, 5, tiny, 1.0) < 1e-6);
  CHECK_THROWS_AS(weighted_loss_coefficient(t, kSchedule, 0.0), std::invalid_argument);
}

TEST_CASE("variational bound terms") {
  SECTION("point mass with the exact denoiser") {
    const G mu({2}, std::vector<double>{0.5, -1.0});
    const AnalyticGaussianModel<double> model(mu, 0.0, kSchedule);
    const std::vector<MixtureComponent<double>> law = {{1.0, mu, 0.0, {}}};
    Rng rng(5);
    const auto terms = vlb_terms(model, std::span<const MixtureComponent<double>>(law), kSchedule, 4, rng);
    REQUIRE(terms.transitions.size() == 999);
    CHECK(*std::max_element(terms.transitions.begin(), terms.transitions.end()) < 1e-3);
    CHECK(terms.prior < 1e-3);
  }
  SECTION("Gaussian data: the bound sits above the entropy") {
    const double s0 = 0.5;
    const G mu = G::scalar(1.0);
    const AnalyticGaussianModel<double> model(mu, s0, kSchedule);
    const std::vector<MixtureComponent<double>> law = {{1.0, mu, s0, {}}};
    Rng rng(6);
    const auto terms = vlb_terms(model, std::span<const MixtureComponent<double>>(law), kSchedule, 1000, rng);
    const double entropy = 0.5 * std::log(2 * std::numbers::pi * std::exp(1.0) * s0 * s0);
    CHECK(terms.total() >= entropy);

    // Closed form: with the exact denoiser and posterior variances only the
    // spread of the posterior mean around E[x_{t-1} | x_t] remains, i.e.
    // c_t^2 Var(x0 | x_t) / (2 var_t) with c_t the x0 coefficient.
    auto post_var = [&](int t) {
      const double ab = kSchedule.alpha_bar(t);
      return s0 * s0 * (1 - ab) / (ab * s0 * s0 + 1 - ab);
    };
    double exact = 0.0;
    for (int t = 2; t <= 1000; ++t) {
      const double ab = kSchedule.alpha_bar(t), ab1 = kSchedule.alpha_bar(t - 1);
      const double c = std::sqrt(ab1) * kSchedule.beta(t) / (1 - ab);
      const double var = kSchedule.beta(t) * (1 - ab1) / (1 - ab);
      exact += c * c * post_var(t) / (2 * var);
    }
    const double b1 = kSchedule.beta(1);
    const double recon = 0.5 * std::log(2 * std::numbers::pi * b1) + post_var(1) / (2 * b1);
    double transitions = 0.0;
    for (double v : terms.transitions) transitions += v;
    CHECK(transitions == Approx(exact).epsilon(0.02));
    CHECK(terms.reconstruction == Approx(recon).margin(0.03));
  }
  SECTION("mixtures are rejected") {
    const AnalyticGaussianModel<double> model(G::scalar(0.0), 1.0, kSchedule);
    const std::vector<MixtureComponent<double>> law = {{0.5, G::scalar(-1.0), 0.1, {}},
                                                       {0.5, G::scalar(1.0), 0.1, {}}};
    Rng rng(7);
    CHECK_THROWS_AS(vlb_terms(model, std::span<const MixtureComponent<double>>(law), kSchedule, 2, rng),
                    UnsupportedError);
  }
}

TEST_CASE("fit") {
  const auto data = make_blob_dataset<float>({.num_classes = 2, .per_class = 4, .height = 8, .width = 8});
  const auto schedule = NoiseSchedule::linear(1000);

  SECTION("label dropout boundaries") {
    for (double p : {0.0, 1.0}) {
      CondNetLite<float> model(tiny_net());
      TrainConfig cfg;
      cfg.epochs = 3;
      cfg.batch_size = 4;
      cfg.label_dropout = p;
      const auto r = fit(model, data, cfg, schedule);
      CHECK(r.examples_seen == 24);
      CHECK(r.dropped_labels == (p == 0.0 ? 0u : 24u));
    }
  }
  SECTION("loss falls on a toy set") {
    CondNetLite<float> model(tiny_net());
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.batch_size = 8;
    cfg.optimizer.lr = 2e-3;
    const auto r = fit(model, data, cfg, schedule);
    REQUIRE(r.loss_trace.size() == 500);
    CHECK(r.loss_trace.back() < 0.5 * r.loss_trace.front());
  }
  SECTION("deterministic for a seed") {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    CondNetLite<float> a(tiny_net()), b(tiny_net());
    fit(a, data, cfg, schedule);
    fit(b, data, cfg, schedule);
    CHECK(a.parameters() == b.parameters());
  }
  SECTION("bad configurations") {
    CondNetLite<float> model(tiny_net());
    TrainConfig cfg;
    cfg.label_dropout = 1.5;
    CHECK_THROWS_AS(fit(model, data, cfg, schedule), std::invalid_argument);
    auto wrong = data;
    wrong[0].class_id = 5;
    CHECK_THROWS_AS(fit(model, wrong, TrainConfig{}, schedule), std::out_of_range);
  }
}
