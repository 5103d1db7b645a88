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

#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <doctest.h>

#include "lossattr/attribution.hpp"
#include "lossattr/errors.hpp"
#include "lossattr/joint_train.hpp"
#include "test_support.hpp"

using namespace lossattr;

namespace {

// A pair whose trained shape is known in closed form: the classifier reads
// only feature 0 (class 1 iff x0 > 0) and the estimator outputs
// relu(1 - |x0|), i.e. it is high near the decision boundary.
struct ToyPair {
  PredictiveModel model;
  LossEstimator estimator;
};

ToyPair toy_pair() {
  PredictiveModel m({{2, 2, Activation::kRelu}, {2, 2, Activation::kIdentity}}, 0.0, 0);
  auto& layers = m.mutable_layers();
  layers[0].weights << 1.0, 0.0, -1.0, 0.0;
  layers[1].weights << -3.0, 3.0, 3.0, -3.0;
  LossEstimator est({0}, {2}, 1);
  est.mutable_projections()[0].weights << -1.0, -1.0;
  est.mutable_projections()[0].bias << 1.0;
  est.mutable_head_weights() << 1.0;
  return {m, est};
}

Eigen::MatrixXd random_rows(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-2, 2);
  return X;
}

}  // namespace

TEST_CASE("mask_feature: definitions") {
  const Eigen::Vector2d x(3.0, 5.0);
  CHECK(mask_feature(x, 0, MaskingStrategy::zero()) == Eigen::Vector2d(0.0, 5.0));
  CHECK(mask_feature(x, 1, MaskingStrategy::constant(-1.0)) == Eigen::Vector2d(3.0, -1.0));
  CHECK(x == Eigen::Vector2d(3.0, 5.0));
  CHECK_THROWS_AS(mask_feature(x, 2, MaskingStrategy::zero()), IndexError);
  CHECK_THROWS_AS(mask_feature(x, -1, MaskingStrategy::zero()), IndexError);
  const std::vector<int> both{0, 1};
  CHECK(mask_features(x, both, MaskingStrategy::constant(7.0)) == Eigen::Vector2d(7.0, 7.0));
}

TEST_CASE("mask_feature: feature_mean equals the column average") {
  Dataset ref;
  ref.features.resize(3, 2);
  ref.features << 1.0, -4.0, 2.0, 0.5, 6.0, 2.0;
  auto s = MaskingStrategy::feature_mean(ref);
  const Eigen::Vector2d x(10.0, 10.0);
  CHECK(mask_feature(x, 0, s)(0) == doctest::Approx((1.0 + 2.0 + 6.0) / 3.0).epsilon(1e-15));
  CHECK(mask_feature(x, 1, s)(1) == doctest::Approx((-4.0 + 0.5 + 2.0) / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(mask_feature(Eigen::Vector3d::Zero(), 2, s), ShapeError);
}

TEST_CASE("MaskingStrategy::parse") {
  CHECK(MaskingStrategy::parse("zero").id() == "zero");
  CHECK(MaskingStrategy::parse("constant:-1.5").constant_value() == -1.5);
  CHECK(MaskingStrategy::parse("constant:-1.5").id() == "constant:-1.5");
  CHECK_THROWS_AS(MaskingStrategy::parse("feature_mean"), InvalidArgument);
  CHECK_THROWS_AS(MaskingStrategy::parse("constant:"), InvalidArgument);
  CHECK_THROWS_AS(MaskingStrategy::parse("constant:1x"), InvalidArgument);
  CHECK_THROWS_AS(MaskingStrategy::parse("blur"), InvalidArgument);
}

TEST_CASE("rank_by_score: descending, ties by ascending index") {
  const std::vector<double> s{0.5, 2.0, 0.5, -1.0, 2.0};
  CHECK(rank_by_score(s) == std::vector<int>{1, 4, 0, 2, 3});
  const std::vector<double> flat(4, 0.0);
  CHECK(rank_by_score(flat) == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("granger_scores: toy model ranks the causal feature first") {
  auto toy = toy_pair();
  const Eigen::Vector2d x(2.5, -1.3);
  auto est = granger_scores(toy.model, toy.estimator, x, MaskingStrategy::zero());
  auto orc = oracle_granger_scores(toy.model, x, 1, MaskingStrategy::zero());
  CHECK(est.base_estimate == 0.0);
  CHECK(est.masked_estimates[0] == 1.0);
  CHECK(est.deltas[1] == 0.0);
  CHECK(orc.deltas[1] == 0.0);
  CHECK(orc.deltas[0] > 0.0);
  CHECK(est.ranking == std::vector<int>{0, 1});
  CHECK(orc.ranking == est.ranking);
}

TEST_CASE("granger_scores: no-op masking gives an exact zero delta") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto p = lossattr::testing::random_small_problem(seed);
    const int d = p.model.input_dim();
    Eigen::VectorXd x = p.inputs.col(0);
    x(seed % d) = 0.0;
    auto r = granger_scores(p.model, p.estimator, x, MaskingStrategy::zero());
    CHECK(r.deltas[seed % d] == 0.0);
    auto o = oracle_granger_scores(p.model, x, p.labels[0], MaskingStrategy::zero());
    CHECK(o.deltas[seed % d] == 0.0);
    x(0) = -0.75;
    CHECK(granger_scores(p.model, p.estimator, x, MaskingStrategy::constant(-0.75)).deltas[0] == 0.0);
  }
}

TEST_CASE("granger_scores: deltas are exactly masked minus base") {
  auto p = lossattr::testing::random_small_problem(3);
  auto r = granger_scores(p.model, p.estimator, p.inputs.col(1), MaskingStrategy::constant(0.3), 7);
  CHECK(r.sample_id == 7);
  for (std::size_t j = 0; j < r.deltas.size(); ++j) {
    CHECK(r.deltas[j] == r.masked_estimates[j] - r.base_estimate);
  }
  CHECK(r.ranking == rank_by_score(r.deltas));
  auto again = granger_scores(p.model, p.estimator, p.inputs.col(1), MaskingStrategy::constant(0.3), 7);
  CHECK(again.ranking == r.ranking);
  CHECK(again.deltas == r.deltas);
}

TEST_CASE("oracle_granger_scores: insensitive model and brute-force loop") {
  auto zero = PredictiveModel::create(5, std::vector<int>{4}, 3, 0.0, 1);
  for (auto& l : zero.mutable_layers()) l.weights.setZero();
  auto r = oracle_granger_scores(zero, Eigen::VectorXd::LinSpaced(5, 1, 5), 2, MaskingStrategy::zero());
  CHECK(r.deltas == std::vector<double>(5, 0.0));
  CHECK(r.ranking == std::vector<int>{0, 1, 2, 3, 4});

  for (std::uint64_t seed = 10; seed < 20; ++seed) {
    auto p = lossattr::testing::random_small_problem(seed);
    Eigen::VectorXd x = p.inputs.col(2);
    auto o = oracle_granger_scores(p.model, x, p.labels[2], MaskingStrategy::constant(1.25));
    const auto xs = lossattr::testing::to_std(x);
    const double base =
        lossattr::testing::loop_cross_entropy(lossattr::testing::loop_forward(p.model, xs).logits, p.labels[2]);
    for (int j = 0; j < x.size(); ++j) {
      auto xm = xs;
      xm[j] = 1.25;
      const double masked = lossattr::testing::loop_cross_entropy(
          lossattr::testing::loop_forward(p.model, xm).logits, p.labels[2]);
      CHECK(o.deltas[j] == doctest::Approx(masked - base).epsilon(1e-10).scale(1e-12));
    }
  }
}

TEST_CASE("explain_batch: empty, singleton, permutation, workers") {
  auto p = lossattr::testing::random_small_problem(30);
  const int d = p.model.input_dim();
  const auto strategy = MaskingStrategy::zero();
  CHECK(explain_batch(p.model, p.estimator, Eigen::MatrixXd(0, d), strategy).empty());

  Eigen::MatrixXd X = random_rows(5, d, 2);
  auto single = explain_batch(p.model, p.estimator, X.topRows(1), strategy);
  REQUIRE(single.size() == 1);
  auto direct = granger_scores(p.model, p.estimator, X.row(0).transpose(), strategy);
  CHECK(single[0].deltas == direct.deltas);
  CHECK(single[0].ranking == direct.ranking);

  const std::vector<int> ids{10, 11, 12, 13, 14};
  auto all = explain_batch(p.model, p.estimator, X, strategy, ids);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  Eigen::MatrixXd Xp(5, d);
  std::vector<int> ids_p;
  for (int i = 0; i < 5; ++i) {
    Xp.row(i) = X.row(perm[i]);
    ids_p.push_back(ids[perm[i]]);
  }
  auto permuted = explain_batch(p.model, p.estimator, Xp, strategy, ids_p);
  for (int i = 0; i < 5; ++i) {
    CHECK(permuted[i].sample_id == all[perm[i]].sample_id);
    CHECK(permuted[i].deltas == all[perm[i]].deltas);
  }
  auto threaded = explain_batch(p.model, p.estimator, X, strategy, ids, 3);
  for (int i = 0; i < 5; ++i) CHECK(threaded[i].deltas == all[i].deltas);
}

TEST_CASE("explain_batch: the first failing sample is reported by index") {
  auto p = lossattr::testing::random_small_problem(31);
  Eigen::MatrixXd X = random_rows(6, p.model.input_dim(), 3);
  X(4, 0) = std::numeric_limits<double>::quiet_NaN();
  X(5, 0) = std::numeric_limits<double>::quiet_NaN();
  for (int workers : {1, 3}) {
    try {
      explain_batch(p.model, p.estimator, X, MaskingStrategy::zero(), {}, workers);
      FAIL("expected failure");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("sample 4") != std::string::npos);
    }
  }
}

TEST_CASE("strategy agnosticism: one pair, three strategies, parameters untouched") {
  auto p = lossattr::testing::random_small_problem(32, 8);
  Dataset ref;
  ref.features = p.inputs.transpose();
  const PredictiveModel model_before = p.model;
  const LossEstimator est_before = p.estimator;
  for (const auto& s : {MaskingStrategy::zero(), MaskingStrategy::constant(0.5),
                        MaskingStrategy::feature_mean(ref)}) {
    auto r = explain_batch(p.model, p.estimator, p.inputs.transpose(), s);
    CHECK(r.size() == 8);
  }
  CHECK(p.model == model_before);
  CHECK(p.estimator == est_before);
}

TEST_CASE("attribution JSON and CSV layout") {
  AttributionResult r;
  r.sample_id = 3;
  r.base_estimate = 0.5;
  r.masked_estimates = {0.75, 0.25};
  r.deltas = {0.25, -0.25};
  r.ranking = {0, 1};
  auto j = to_json(r);
  CHECK(j["sample_id"] == 3);
  CHECK(j["deltas"][1] == -0.25);
  CHECK(j["ranking"][0] == 0);

  auto dir = std::filesystem::path(LOSSATTR_TEST_TMP) / "attribution";
  std::filesystem::create_directories(dir);
  const std::vector<std::string> names{"a", "b"};
  write_attributions_csv({r}, names, "zero", dir / "a.csv");
  std::ifstream in(dir / "a.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "sample_id,strategy,feature,feature_name,delta,rank\n3,zero,0,a,0.25,0\n3,zero,1,b,-0.25,1\n");
  write_attributions_csv({}, names, "zero", dir / "empty.csv");
  std::ifstream e(dir / "empty.csv");
  std::stringstream es;
  es << e.rdbuf();
  CHECK(es.str() == "sample_id,strategy,feature,feature_name,delta,rank\n");
}
