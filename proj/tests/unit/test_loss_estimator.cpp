/*
 * Copyright 2026 The lossattr Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <vector>

#include <doctest.h>

#include "lossattr/errors.hpp"
#include "lossattr/loss_estimator.hpp"
#include "test_support.hpp"

using namespace lossattr;
using lossattr::testing::CheckedLoss;
using lossattr::testing::check_gradients;

TEST_CASE("estimate_loss: zero parameters give zero") {
  auto m = PredictiveModel::create(4, std::vector<int>{6, 5}, 3, 0.0, 1);
  LossEstimator est({0, 1}, {6, 5}, 16);
  Rng rng(2);
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x(j) = rng.uniform(-3, 3);
    CHECK(estimate_loss(est, forward(m, x))(0) == 0.0);
  }
}

TEST_CASE("estimate_loss: one tap, one unit, by hand") {
  LossEstimator est({0}, {1}, 1);
  est.mutable_projections()[0].weights(0, 0) = 2.0;
  est.mutable_projections()[0].bias(0) = -0.5;
  est.mutable_head_weights()(0) = 3.0;
  est.set_head_bias(0.25);
  // relu(2 * 1.5 - 0.5) * 3 + 0.25
  std::vector<Eigen::VectorXd> taps{Eigen::VectorXd::Constant(1, 1.5)};
  CHECK(estimate_loss(est, taps) == 7.75);
  std::vector<Eigen::VectorXd> negative{Eigen::VectorXd::Constant(1, -1.0)};
  CHECK(estimate_loss(est, negative) == 0.25);
}

TEST_CASE("estimate_loss: pure, and agrees with the loop oracle") {
  auto p = lossattr::testing::random_small_problem(21, 6);
  auto tr = forward(p.model, p.inputs);
  auto a = estimate_loss(p.estimator, tr);
  auto b = estimate_loss(p.estimator, tr);
  CHECK(a == b);
  for (int col = 0; col < p.inputs.cols(); ++col) {
    auto loop = lossattr::testing::loop_forward(p.model, lossattr::testing::to_std(p.inputs.col(col)));
    std::vector<std::vector<double>> taps;
    for (int t : p.estimator.taps()) taps.push_back(loop.hidden[t]);
    CHECK(a(col) == doctest::Approx(lossattr::testing::loop_estimate(p.estimator, taps)).epsilon(1e-12));
  }
}

TEST_CASE("estimate_loss: tap shape errors") {
  LossEstimator est({0}, {3}, 4);
  std::vector<Eigen::VectorXd> wrong{Eigen::VectorXd::Zero(2)};
  CHECK_THROWS_AS(estimate_loss(est, wrong), ShapeError);
  std::vector<Eigen::VectorXd> too_many{Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)};
  CHECK_THROWS_AS(estimate_loss(est, too_many), ShapeError);

  auto m = PredictiveModel::create(2, std::vector<int>{5}, 2, 0.0, 1);
  CHECK_THROWS_AS(est.check_compatible(m), ShapeError);
  CHECK_THROWS_AS(LossEstimator::create(m, std::vector<int>{1}, 4, 0), ShapeError);
}

TEST_CASE("contrastive_loss: hinge boundary cases") {
  const double gamma = 0.7;
  std::vector<LossPair> met{{2.0, 1.0, 1.0 + gamma, 1.0}};
  CHECK(contrastive_loss(met, gamma) == 0.0);
  std::vector<LossPair> equal{{2.0, 1.0, 0.3, 0.3}};
  CHECK(contrastive_loss(equal, gamma) == gamma);
  std::vector<LossPair> tie{{1.0, 1.0, 0.9, 0.1}};
  CHECK(contrastive_loss(tie, 1.0) == doctest::Approx(1.8));
}

TEST_CASE("contrastive_loss: four-pair fixture") {
  // tests/oracles/frozen_values.py
  std::vector<LossPair> pairs{{2.0, 1.0, 0.5, 0.2},
                              {0.3, 0.9, 0.1, 0.4},
                              {1.0, 1.0, 0.7, 0.2},
                              {0.5, 0.1, 1.0, -1.0}};
  CHECK(std::abs(contrastive_loss(pairs, 1.0) - 2.9) < 1e-12);
  CHECK(std::abs(contrastive_loss(pairs, 1.0, PairIndicator::kLiteral) - 2.7) < 1e-12);

  auto g = contrastive_loss_grad(pairs, 1.0);
  CHECK(g[0].d_estimate_i == -1.0);
  CHECK(g[0].d_estimate_j == 1.0);
  CHECK(g[1].d_estimate_i == 1.0);
  CHECK(g[1].d_estimate_j == -1.0);
  CHECK(g[3].d_estimate_i == 0.0);
  auto lit = contrastive_loss_grad(pairs, 1.0, PairIndicator::kLiteral);
  CHECK(lit[1].d_estimate_i == 0.0);
  CHECK(lit[2].d_estimate_j == 0.0);
}

TEST_CASE("contrastive_loss: gradient matches finite differences away from kinks") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LossPair> pairs(4);
    for (auto& p : pairs) p = {rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    bool near_kink = false;
    for (const auto& p : pairs) {
      const double sign = p.s_i > p.s_j ? 1.0 : -1.0;
      if (std::abs(-sign * (p.estimate_i - p.estimate_j) + 1.0) < 1e-3) near_kink = true;
    }
    if (near_kink) continue;
    auto g = contrastive_loss_grad(pairs, 1.0);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      auto up = pairs, down = pairs;
      up[k].estimate_i += 1e-6;
      down[k].estimate_i -= 1e-6;
      const double fd = (contrastive_loss(up, 1.0) - contrastive_loss(down, 1.0)) / 2e-6;
      CHECK(g[k].d_estimate_i == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("dropout_calibration_loss: reference values") {
  CHECK(dropout_calibration_loss(1.0, 1.0, 0.3, 0.1) == 0.0);
  CHECK(dropout_calibration_loss(1.2, 1.0, 0.2, 0.0) == 0.0);
  CHECK(dropout_calibration_loss(1.4, 1.0, 0.2, 0.05) == doctest::Approx(0.25).epsilon(1e-14));

  // tests/oracles/frozen_values.py, xi = 0.1.
  const double s[4][3] = {{1.4, 1.0, 0.2}, {0.5, 1.0, 0.2}, {1.0, 1.0, 0.2}, {0.2, 0.25, 0.05}};
  const double expected[4] = {0.29999999999999993, 0.4, 0.0, 0.10000000000000003};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double v = dropout_calibration_loss(s[i][0], s[i][1], s[i][2], 0.1);
    CHECK(std::abs(v - expected[i]) < 1e-12);
    total += v;
  }
  CHECK(std::abs(total - 0.8) < 1e-12);

  PredictionInterval iv;
  iv.mu = 1.0;
  iv.sigma = 0.2;
  CHECK(dropout_calibration_loss(1.4, iv, 0.05) == dropout_calibration_loss(1.4, 1.0, 0.2, 0.05));
}

TEST_CASE("dropout_calibration_grad: finite differences away from kinks") {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const double mu = rng.uniform(0, 2), sigma = rng.uniform(0, 0.5), xi = rng.uniform(0, 0.6);
    const double e = rng.uniform(-1, 3);
    const double k1 = e - (mu + sigma) + xi, k2 = (mu - sigma) - e + xi;
    if (std::abs(k1) < 1e-3 || std::abs(k2) < 1e-3) continue;
    const double fd = (dropout_calibration_loss(e + 1e-6, mu, sigma, xi) -
                       dropout_calibration_loss(e - 1e-6, mu, sigma, xi)) / 2e-6;
    const double g = dropout_calibration_grad(e, mu, sigma, xi);
    CHECK(g == doctest::Approx(fd).epsilon(1e-6));
    CHECK((g == -1.0 || g == 0.0 || g == 1.0));
  }
}

TEST_CASE("joint objectives: analytic gradients match central differences") {
  for (std::uint64_t seed = 200; seed < 210; ++seed) {
    INFO("seed " << seed);
    auto c = check_gradients(seed, CheckedLoss::kContrastive);
    CHECK(c.max_rel() < 1e-4);
    auto dc = check_gradients(seed, CheckedLoss::kCalibration);
    CHECK(dc.max_rel() < 1e-4);
  }
}

TEST_CASE("estimator parameters: names and optimizer step") {
  auto p = lossattr::testing::random_small_problem(9);
  auto views = p.estimator.parameters();
  CHECK(views.front().name == "estimator.tap0.weight");
  CHECK(views.back().name == "estimator.head.bias");
  LossEstimator before = p.estimator;
  Adam adam;
  optimizer_step(p.estimator, EstimatorGradients::zeros_like(p.estimator), adam);
  CHECK(p.estimator == before);
}
