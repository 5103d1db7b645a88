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

#include <benchmark/benchmark.h>

#include "lossattr/attribution.hpp"
#include "lossattr/evaluation.hpp"
#include "lossattr/joint_train.hpp"
#include "lossattr/synthetic.hpp"

using namespace lossattr;

namespace {

const std::vector<int> kHidden{64, 64, 64, 64};

Dataset synthetic(int n, int d) {
  SyntheticShiftSpec spec;
  spec.d = d;
  spec.n = n;
  spec.beta = 0.3;
  spec.seed = 1;
  auto t = generate_triple(spec);
  Standardizer::fit(t.original).apply(t.original);
  return t.original;
}

void BM_Forward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  auto model = PredictiveModel::create(20, kHidden, 4, 0.0, 1);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, batch);
  for (auto _ : state) {
    auto trace = forward(model, x);
    benchmark::DoNotOptimize(trace.logits.data());
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(32)->Arg(512);

void BM_GrangerScores(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  auto model = PredictiveModel::create(d, kHidden, 4, 0.0, 1);
  auto est = LossEstimator::create(model, 16, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Random(d);
  const auto zero = MaskingStrategy::zero();
  for (auto _ : state) {
    auto r = granger_scores(model, est, x, zero);
    benchmark::DoNotOptimize(r.deltas.data());
  }
}
BENCHMARK(BM_GrangerScores)->Arg(20)->Arg(64);

void BM_DeltaLogOdds(benchmark::State& state) {
  auto model = PredictiveModel::create(20, kHidden, 4, 0.0, 1);
  Eigen::VectorXd x = Eigen::VectorXd::Random(20);
  const auto ranking = random_ranking_baseline(20, 3);
  const auto zero = MaskingStrategy::zero();
  for (auto _ : state) benchmark::DoNotOptimize(delta_log_odds(model, x, ranking, 15, zero));
}
BENCHMARK(BM_DeltaLogOdds);

void BM_TrainEpoch(benchmark::State& state) {
  const auto objective = static_cast<Objective>(state.range(0));
  const Dataset data = synthetic(1000, 20);
  JointTrainConfig cfg;
  cfg.objective = objective;
  cfg.epochs = 1;
  cfg.batch_size = objective == Objective::kContrastive ? 32 : 128;
  const double dropout = objective == Objective::kContrastive ? 0.0 : 0.1;
  for (auto _ : state) {
    auto model = PredictiveModel::create(20, kHidden, 4, dropout, 1);
    auto est = LossEstimator::create(model, 16, 1);
    auto r = joint_train(data, {}, std::move(model), std::move(est), cfg);
    benchmark::DoNotOptimize(r.history.epochs.back().loss);
  }
  state.SetItemsProcessed(state.iterations() * data.num_samples());
  state.SetLabel(objective_name(objective));
}
BENCHMARK(BM_TrainEpoch)
    ->Arg(static_cast<int>(Objective::kContrastive))
    ->Arg(static_cast<int>(Objective::kDropoutCalibration))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
