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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>

#include "lossattr/errors.hpp"
#include "lossattr/evaluation.hpp"
#include "lossattr/rng.hpp"
#include "test_support.hpp"

using namespace lossattr;

namespace {

Dataset random_dataset(int n, int d, int classes, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.features.resize(n, d);
  for (int i = 0; i < data.features.size(); ++i) data.features.data()[i] = rng.normal();
  for (int i = 0; i < n; ++i) data.labels.push_back(static_cast<int>(rng.next() % classes));
  data.num_classes = classes;
  data.feature_names = default_feature_names(d);
  return data;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("log_odds and clamping") {
  CHECK(log_odds(0.5) == 0.0);
  CHECK(log_odds(0.9) - log_odds(0.5) == doctest::Approx(2.1972245773362196).epsilon(1e-14));
  CHECK(log_odds(1.0) == log_odds(1.0 - kProbabilityClamp));
  CHECK(log_odds(0.0) == doctest::Approx(-log_odds(1.0)).epsilon(1e-9));
  CHECK(std::abs(log_odds(1.0)) < 16.12);
}

TEST_CASE("masked_count rounds up") {
  CHECK(masked_count(0, 20) == 0);
  CHECK(masked_count(15, 20) == 3);
  CHECK(masked_count(15, 10) == 2);
  CHECK(masked_count(1, 64) == 1);
  CHECK(masked_count(100, 7) == 7);
  CHECK_THROWS_AS(masked_count(-1, 5), InvalidArgument);
  CHECK_THROWS_AS(masked_count(100.5, 5), InvalidArgument);
}

TEST_CASE("check_permutation") {
  const std::vector<int> good{2, 0, 1};
  CHECK_NOTHROW(check_permutation(good, 3));
  CHECK_THROWS_AS(check_permutation(good, 4), RankingError);
  const std::vector<int> dup{0, 0, 1};
  CHECK_THROWS_AS(check_permutation(dup, 3), RankingError);
  const std::vector<int> out{0, 3, 1};
  CHECK_THROWS_AS(check_permutation(out, 3), RankingError);
}

TEST_CASE("delta_log_odds: frozen value") {
  const std::vector<int> hidden{5};
  auto model = PredictiveModel::create(4, hidden, 3, 0.0, 5);
  Eigen::Vector4d x(1.0, -0.5, 0.25, 2.0);
  const std::vector<int> ranking{2, 0, 3, 1};
  const Eigen::VectorXd z = forward(model, x).logits.col(0);
  CHECK(argmax(softmax(z)) == 2);
  CHECK(delta_log_odds(model, x, ranking, 50, MaskingStrategy::zero()) ==
        doctest::Approx(-1.1564560313944574).epsilon(1e-12));
  CHECK(delta_log_odds(model, x, ranking, 0, MaskingStrategy::zero()) == 0.0);
  const std::vector<int> bad{0, 1, 2};
  CHECK_THROWS_AS(delta_log_odds(model, x, bad, 50, MaskingStrategy::zero()), RankingError);
}

TEST_CASE("evaluate_explainer: k = 0 and single-sample percentiles") {
  auto data = random_dataset(6, 4, 3, 1);
  const std::vector<int> hidden{5};
  auto model = PredictiveModel::create(4, hidden, 3, 0.0, 2);
  auto r0 = evaluate_explainer(model, random_explainer(3), data, 0, MaskingStrategy::zero(), "random");
  CHECK(r0.per_sample.size() == 6);
  for (const auto& [id, s] : r0.per_sample) CHECK(s == 0.0);
  CHECK(r0.median == 0.0);

  auto one = evaluate_explainer(model, random_explainer(3), data.subset(std::vector<int>{4}), 50,
                                MaskingStrategy::zero(), "random");
  REQUIRE(one.per_sample.size() == 1);
  const double s = one.per_sample[0].second;
  CHECK(one.median == s);
  CHECK(one.p25 == s);
  CHECK(one.p75 == s);

  auto full = evaluate_explainer(model, random_explainer(3), data, 50, MaskingStrategy::zero(), "random");
  auto threaded =
      evaluate_explainer(model, random_explainer(3), data, 50, MaskingStrategy::zero(), "random", 3);
  CHECK(full.scores() == threaded.scores());
  CHECK(full.explainer_id == "random");
  CHECK(full.strategy_id == "zero");
  CHECK_THROWS_AS(evaluate_explainer(model, random_explainer(3), data.subset(std::vector<int>{}), 50,
                                     MaskingStrategy::zero(), "random"),
                  InvalidArgument);
}

TEST_CASE("evaluate_explainer: a broken explainer names the sample") {
  auto data = random_dataset(4, 3, 2, 4);
  const std::vector<int> hidden{3};
  auto model = PredictiveModel::create(3, hidden, 2, 0.0, 2);
  Explainer broken = [](const Eigen::VectorXd&, int index) {
    return index == 2 ? std::vector<int>{0, 0, 1} : std::vector<int>{0, 1, 2};
  };
  try {
    evaluate_explainer(model, broken, data, 50, MaskingStrategy::zero(), "broken");
    FAIL("expected RankingError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("sample 2") != std::string::npos);
  }
}

TEST_CASE("random_ranking_baseline") {
  CHECK(random_ranking_baseline(1, 99) == std::vector<int>{0});
  CHECK(random_ranking_baseline(10, 7) == random_ranking_baseline(10, 7));
  CHECK_THROWS_AS(random_ranking_baseline(0, 1), InvalidArgument);
  std::vector<int> first(4, 0);
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    auto r = random_ranking_baseline(4, derive_seed(123, s));
    check_permutation(r, 4);
    ++first[r[0]];
  }
  for (int c : first) CHECK(std::abs(c / double(draws) - 0.25) < 0.02);
}

TEST_CASE("severity_sweep: clean level, determinism, validation") {
  auto p = lossattr::testing::random_small_problem(40);
  const int d = p.model.input_dim();
  auto data = random_dataset(20, d, p.model.num_classes(), 5);
  const std::vector<double> levels{0.0, 0.5, 2.0};
  auto curve = severity_sweep(p.model, p.estimator, data, levels, 11);
  REQUIRE(curve.size() == 3);
  auto clean = estimate_loss(p.estimator, forward(p.model, Eigen::MatrixXd(data.features.transpose())));
  CHECK(curve[0].mean_estimate == clean.mean());
  CHECK(curve[2].noise_std == 2.0);
  auto again = severity_sweep(p.model, p.estimator, data, levels, 11);
  for (int i = 0; i < 3; ++i) CHECK(again[i].mean_estimate == curve[i].mean_estimate);

  const std::vector<double> no_zero{0.5, 1.0};
  const std::vector<double> unsorted{0.0, 2.0, 1.0};
  const std::vector<double> negative{0.0, -1.0};
  CHECK_THROWS_AS(severity_sweep(p.model, p.estimator, data, no_zero, 1), InvalidArgument);
  CHECK_THROWS_AS(severity_sweep(p.model, p.estimator, data, unsorted, 1), InvalidArgument);
  CHECK_THROWS_AS(severity_sweep(p.model, p.estimator, data, negative, 1), InvalidArgument);
  CHECK_THROWS_AS(severity_sweep(p.model, p.estimator, data, std::vector<double>{}, 1), InvalidArgument);
}

TEST_CASE("report CSV writers") {
  EvalReport r;
  r.explainer_id = "profile";
  r.strategy_id = "zero";
  r.k_percent = 15;
  r.per_sample = {{0, 1.5}, {3, -0.5}, {7, 0.5}};
  summarize(r);
  CHECK(r.median == 0.5);
  CHECK(r.p25 == 0.0);
  CHECK(r.p75 == 1.0);
  auto j = r.to_json();
  CHECK(j["per_sample"][1]["sample_id"] == 3);
  CHECK(j["explainer"] == "profile");

  auto dir = std::filesystem::path(LOSSATTR_TEST_TMP) / "evaluation";
  std::filesystem::create_directories(dir);
  write_reports_csv({r}, dir / "report.csv");
  CHECK(slurp(dir / "report.csv") ==
        "explainer,strategy,k_percent,n,median,p25,p75\nprofile,zero,15,3,0.5,0,1\n");
  write_plot_data_csv({r}, dir / "plot.csv");
  CHECK(slurp(dir / "plot.csv") ==
        "explainer,k,sample_id,score\nprofile,15,0,1.5\nprofile,15,3,-0.5\nprofile,15,7,0.5\n");
}
