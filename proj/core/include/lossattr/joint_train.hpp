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

#ifndef LOSSATTR_JOINT_TRAIN_HPP_
#define LOSSATTR_JOINT_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lossattr/dataset.hpp"
#include "lossattr/loss_estimator.hpp"
#include "lossattr/nn.hpp"

namespace lossattr {

enum class Objective { kContrastive, kDropoutCalibration };

std::string objective_name(Objective o);
Objective parse_objective(const std::string& name);

struct JointTrainConfig {
  Objective objective = Objective::kContrastive;
  double gamma = 1.0;       // contrastive margin
  double xi = 0.0;          // calibration margin
  double lambda_aux = 1.0;  // weight of the auxiliary loss
  int mc_passes = 10;       // dropout passes per sample, calibration mode
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 30;
  std::uint64_t seed = 0;
  PairIndicator indicator = PairIndicator::kSigned;
  // Whether the classifier's dropout is on during contrastive-mode passes.
  bool contrastive_dropout = false;

  // Throws InvalidArgument on negative margins, lambda < 0, non-positive
  // sizes, or an odd batch size in contrastive mode.
  void validate() const;
};

// Gradients and objective values of one minibatch.
//   total = mean_batch(cross-entropy) + lambda * aux
// where aux is the per-pair mean of the contrastive hinge, or the per-sample
// mean of the calibration hinge.
struct StepResult {
  double main_loss = 0.0;
  double aux_loss = 0.0;
  ModelGradients model;
  EstimatorGradients estimator;
  // Loss targets captured from the forward pass: per-sample cross-entropy
  // (contrastive) or per-sample mu and sigma (calibration).
  std::vector<double> targets;
  std::vector<double> target_sigma;
  Eigen::RowVectorXd estimates;
};

// Contrastive step on the columns of `inputs` (B even). Column k is paired
// with column k + B/2. `masks` replays dropout (empty: inactive). If
// `targets` is given it replaces the captured per-sample losses in the pair
// objective.
StepResult contrastive_step(const PredictiveModel& model,
                            const LossEstimator& estimator,
                            const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            std::span<const int> labels,
                            const JointTrainConfig& config,
                            const std::vector<Eigen::MatrixXd>& masks,
                            std::optional<std::span<const double>> targets = {});

// Calibration step. The batch is replicated `config.mc_passes` times (column
// t * B + b is pass t of sample b) and run through one dropout forward with
// `stacked_masks`. mu and sigma per sample come from the pass losses; the
// estimator reads the pass-averaged activations. Optional `mu` / `sigma`
// override the captured interval.
StepResult calibration_step(const PredictiveModel& model,
                            const LossEstimator& estimator,
                            const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            std::span<const int> labels,
                            const JointTrainConfig& config,
                            const std::vector<Eigen::MatrixXd>& stacked_masks,
                            std::optional<std::span<const double>> mu = {},
                            std::optional<std::span<const double>> sigma = {});

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double aux_loss = 0.0;
  double spearman = 0.0;
};

struct TrainHistory {
  // Row 0 describes the untrained pair; row e > 0 is the mean over the
  // minibatches of epoch e.
  std::vector<EpochRecord> epochs;

  void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  PredictiveModel model;
  LossEstimator estimator;
  TrainHistory history;
};

// Spearman correlation between estimated and true loss (dropout inactive)
// over `data`.
double estimator_spearman(const PredictiveModel& model,
                          const LossEstimator& estimator, const Dataset& data);

// Per-sample cross-entropy and estimate with dropout inactive.
struct LossPairs {
  std::vector<double> true_loss;
  std::vector<double> estimated_loss;
};
LossPairs evaluate_losses(const PredictiveModel& model,
                          const LossEstimator& estimator, const Dataset& data);

// Trains classifier and estimator together on `train`. `holdout` (may be
// empty) feeds the per-epoch Spearman column. Throws TrainingError on any
// non-finite loss or parameter.
TrainResult joint_train(const Dataset& train, const Dataset& holdout,
                        PredictiveModel model, LossEstimator estimator,
                        const JointTrainConfig& config);

}  // namespace lossattr

#endif  // LOSSATTR_JOINT_TRAIN_HPP_
