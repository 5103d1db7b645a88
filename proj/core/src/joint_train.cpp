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

#include "lossattr/joint_train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lossattr/adam.hpp"
#include "lossattr/errors.hpp"
#include "lossattr/rng.hpp"
#include "lossattr/stats.hpp"

namespace lossattr {

std::string objective_name(Objective o) {
  return o == Objective::kContrastive ? "contrastive" : "dropout_calibration";
}

Objective parse_objective(const std::string& name) {
  if (name == "contrastive") return Objective::kContrastive;
  if (name == "dropout_calibration") return Objective::kDropoutCalibration;
  throw InvalidArgument("unknown objective: " + name);
}

void JointTrainConfig::validate() const {
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw InvalidArgument("gamma must be >= 0");
  if (!(xi >= 0.0) || !std::isfinite(xi)) throw InvalidArgument("xi must be >= 0");
  if (!(lambda_aux >= 0.0) || !std::isfinite(lambda_aux)) {
    throw InvalidArgument("lambda_aux must be >= 0");
  }
  if (mc_passes < 1) throw InvalidArgument("T (mc_passes) must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (objective == Objective::kContrastive && batch_size % 2 != 0) {
    throw InvalidArgument("contrastive training needs an even batch size");
  }
}

namespace {

void check_labels(std::span<const int> labels, Eigen::Index batch) {
  if (static_cast<Eigen::Index>(labels.size()) != batch) {
    throw ShapeError("label count does not match batch size");
  }
}

// Routes estimator tap gradients onto the model's hidden layers.
std::vector<std::optional<Eigen::MatrixXd>> route_taps(
    const PredictiveModel& model, const LossEstimator& estimator,
    std::vector<Eigen::MatrixXd> tap_grads) {
  std::vector<std::optional<Eigen::MatrixXd>> taps(model.num_hidden());
  for (std::size_t i = 0; i < tap_grads.size(); ++i) {
    const int layer = estimator.taps()[i];
    if (taps[layer]) {
      *taps[layer] += tap_grads[i];
    } else {
      taps[layer] = std::move(tap_grads[i]);
    }
  }
  return taps;
}

}  // namespace

StepResult contrastive_step(const PredictiveModel& model,
                            const LossEstimator& estimator,
                            const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            std::span<const int> labels,
                            const JointTrainConfig& config,
                            const std::vector<Eigen::MatrixXd>& masks,
                            std::optional<std::span<const double>> targets) {
  const Eigen::Index batch = inputs.cols();
  check_labels(labels, batch);
  if (batch < 2 || batch % 2 != 0) {
    throw InvalidArgument("contrastive step needs an even batch of at least 2");
  }
  auto trace = forward_with_masks(model, inputs, masks);

  StepResult out;
  out.targets.resize(batch);
  Eigen::MatrixXd logit_grad(model.num_classes(), batch);
  double loss_sum = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    out.targets[b] = cross_entropy(trace.logits.col(b), labels[b]);
    loss_sum += out.targets[b];
    logit_grad.col(b) = cross_entropy_grad(trace.logits.col(b), labels[b]) /
                        static_cast<double>(batch);
  }
  out.main_loss = loss_sum / static_cast<double>(batch);
  if (targets) {
    if (static_cast<Eigen::Index>(targets->size()) != batch) {
      throw ShapeError("target count does not match batch size");
    }
    out.targets.assign(targets->begin(), targets->end());
  }

  auto tap_inputs = gather_taps(estimator, trace.hidden_activations);
  auto etrace = estimator_forward(estimator, tap_inputs);
  out.estimates = etrace.estimates;

  const Eigen::Index half = batch / 2;
  std::vector<LossPair> pairs;
  pairs.reserve(half);
  for (Eigen::Index k = 0; k < half; ++k) {
    pairs.push_back({out.targets[k], out.targets[k + half], etrace.estimates(k),
                     etrace.estimates(k + half)});
  }
  const double n_pairs = static_cast<double>(half);
  out.aux_loss = contrastive_loss(pairs, config.gamma, config.indicator) / n_pairs;
  auto pair_grads = contrastive_loss_grad(pairs, config.gamma, config.indicator);

  Eigen::RowVectorXd upstream(batch);
  const double scale = config.lambda_aux / n_pairs;
  for (Eigen::Index k = 0; k < half; ++k) {
    upstream(k) = scale * pair_grads[k].d_estimate_i;
    upstream(k + half) = scale * pair_grads[k].d_estimate_j;
  }
  auto ebw = estimator_backward(estimator, etrace, upstream);
  out.estimator = std::move(ebw.params);

  UpstreamGradients up{std::move(logit_grad),
                       route_taps(model, estimator, std::move(ebw.tap_grads))};
  out.model = backward(model, trace, up);
  return out;
}

StepResult calibration_step(const PredictiveModel& model,
                            const LossEstimator& estimator,
                            const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            std::span<const int> labels,
                            const JointTrainConfig& config,
                            const std::vector<Eigen::MatrixXd>& stacked_masks,
                            std::optional<std::span<const double>> mu,
                            std::optional<std::span<const double>> sigma) {
  const Eigen::Index batch = inputs.cols();
  const int passes = config.mc_passes;
  check_labels(labels, batch);
  if (batch < 1) throw InvalidArgument("calibration step needs a non-empty batch");
  if (passes < 1) throw InvalidArgument("T (mc_passes) must be >= 1");

  const Eigen::Index total = batch * passes;
  Eigen::MatrixXd stacked(inputs.rows(), total);
  for (int t = 0; t < passes; ++t) stacked.middleCols(t * batch, batch) = inputs;
  auto trace = forward_with_masks(model, stacked, stacked_masks);

  StepResult out;
  out.targets.resize(batch);
  out.target_sigma.resize(batch);
  Eigen::MatrixXd logit_grad(model.num_classes(), total);
  std::vector<double> pass_losses(passes);
  double loss_sum = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int t = 0; t < passes; ++t) {
      const Eigen::Index c = t * batch + b;
      pass_losses[t] = cross_entropy(trace.logits.col(c), labels[b]);
      loss_sum += pass_losses[t];
      logit_grad.col(c) = cross_entropy_grad(trace.logits.col(c), labels[b]) /
                          static_cast<double>(total);
    }
    const bool constant = std::all_of(pass_losses.begin(), pass_losses.end(),
                                      [&](double s) { return s == pass_losses[0]; });
    out.targets[b] = constant ? pass_losses[0] : mean(pass_losses);
    out.target_sigma[b] = constant ? 0.0 : stddev(pass_losses);
  }
  out.main_loss = loss_sum / static_cast<double>(total);
  if (mu) {
    if (static_cast<Eigen::Index>(mu->size()) != batch) throw ShapeError("mu size mismatch");
    out.targets.assign(mu->begin(), mu->end());
  }
  if (sigma) {
    if (static_cast<Eigen::Index>(sigma->size()) != batch) throw ShapeError("sigma size mismatch");
    out.target_sigma.assign(sigma->begin(), sigma->end());
  }

  // Pass-averaged activations feed the estimator.
  std::vector<Eigen::MatrixXd> mean_taps;
  for (int layer : estimator.taps()) {
    const auto& h = trace.hidden_activations.at(layer);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(h.rows(), batch);
    for (int t = 0; t < passes; ++t) m += h.middleCols(t * batch, batch);
    mean_taps.push_back(m / static_cast<double>(passes));
  }
  auto etrace = estimator_forward(estimator, mean_taps);
  out.estimates = etrace.estimates;

  Eigen::RowVectorXd upstream(batch);
  double aux_sum = 0.0;
  const double scale = config.lambda_aux / static_cast<double>(batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double est = etrace.estimates(b);
    aux_sum += dropout_calibration_loss(est, out.targets[b], out.target_sigma[b], config.xi);
    upstream(b) = scale * dropout_calibration_grad(est, out.targets[b],
                                                   out.target_sigma[b], config.xi);
  }
  out.aux_loss = aux_sum / static_cast<double>(batch);

  auto ebw = estimator_backward(estimator, etrace, upstream);
  out.estimator = std::move(ebw.params);

  std::vector<Eigen::MatrixXd> stacked_tap_grads;
  for (auto& g : ebw.tap_grads) {
    Eigen::MatrixXd spread(g.rows(), total);
    g /= static_cast<double>(passes);
    for (int t = 0; t < passes; ++t) spread.middleCols(t * batch, batch) = g;
    stacked_tap_grads.push_back(std::move(spread));
  }
  UpstreamGradients up{std::move(logit_grad),
                       route_taps(model, estimator, std::move(stacked_tap_grads))};
  out.model = backward(model, trace, up);
  return out;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,aux_loss,spearman\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << format_real(r.loss) << ',' << format_real(r.aux_loss)
        << ',' << format_real(r.spearman) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

LossPairs evaluate_losses(const PredictiveModel& model,
                          const LossEstimator& estimator, const Dataset& data) {
  constexpr int kChunk = 1024;
  LossPairs out;
  const int n = data.num_samples();
  out.true_loss.reserve(n);
  out.estimated_loss.reserve(n);
  for (int start = 0; start < n; start += kChunk) {
    const int m = std::min(kChunk, n - start);
    Eigen::MatrixXd cols = data.features.middleRows(start, m).transpose();
    auto trace = forward(model, cols);
    auto est = estimate_loss(estimator, trace);
    for (int b = 0; b < m; ++b) {
      out.true_loss.push_back(cross_entropy(trace.logits.col(b), data.labels[start + b]));
      out.estimated_loss.push_back(est(b));
    }
  }
  return out;
}

double estimator_spearman(const PredictiveModel& model,
                          const LossEstimator& estimator, const Dataset& data) {
  auto pairs = evaluate_losses(model, estimator, data);
  return spearman(pairs.estimated_loss, pairs.true_loss);
}

namespace {

struct EpochTotals {
  double loss = 0.0;
  double aux = 0.0;
};

class Trainer {
 public:
  Trainer(const Dataset& train, PredictiveModel& model, LossEstimator& estimator,
          const JointTrainConfig& config)
      : train_(train),
        columns_(train.features.transpose()),
        model_(model),
        estimator_(estimator),
        config_(config),
        shuffle_rng_(derive_seed(config.seed, Stream::kShuffle)),
        dropout_rng_(derive_seed(config.seed, Stream::kDropout)),
        model_adam_(AdamConfig{config.learning_rate}),
        estimator_adam_(AdamConfig{config.learning_rate}) {}

  EpochTotals run_epoch(int epoch, bool update) {
    const int n = train_.num_samples();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng_.engine());

    EpochTotals totals;
    int batches = 0;
    int step = 0;
    for (int start = 0; start < n; start += config_.batch_size, ++step) {
      int m = std::min(config_.batch_size, n - start);
      const bool contrastive = config_.objective == Objective::kContrastive;
      if (contrastive) m -= m % 2;
      if (m < (contrastive ? 2 : 1)) continue;

      Eigen::MatrixXd inputs(columns_.rows(), m);
      std::vector<int> labels(m);
      for (int b = 0; b < m; ++b) {
        inputs.col(b) = columns_.col(order[start + b]);
        labels[b] = train_.labels[order[start + b]];
      }

      StepResult result;
      const bool stochastic = model_.dropout_rate() > 0.0 && model_.num_hidden() > 0;
      try {
        if (contrastive) {
          std::vector<Eigen::MatrixXd> masks;
          if (config_.contrastive_dropout && stochastic) {
            masks = draw_dropout_masks(model_, m, dropout_rng_);
          }
          result = contrastive_step(model_, estimator_, inputs, labels, config_, masks);
        } else {
          std::vector<Eigen::MatrixXd> masks;
          if (stochastic) masks = draw_dropout_masks(model_, m * config_.mc_passes, dropout_rng_);
          result = calibration_step(model_, estimator_, inputs, labels, config_, masks);
        }
      } catch (const NumericError& e) {
        throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      if (!std::isfinite(result.main_loss) || !std::isfinite(result.aux_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step));
      }
      if (update) {
        try {
          optimizer_step(model_, result.model, model_adam_);
          optimizer_step(estimator_, result.estimator, estimator_adam_);
        } catch (const NumericError& e) {
          throw TrainingError(std::string(e.what()) + " at epoch " +
                              std::to_string(epoch) + ", step " + std::to_string(step));
        }
      }
      totals.loss += result.main_loss;
      totals.aux += result.aux_loss;
      ++batches;
    }
    if (batches > 0) {
      totals.loss /= batches;
      totals.aux /= batches;
    }
    return totals;
  }

 private:
  const Dataset& train_;
  Eigen::MatrixXd columns_;
  PredictiveModel& model_;
  LossEstimator& estimator_;
  const JointTrainConfig& config_;
  Rng shuffle_rng_;
  Rng dropout_rng_;
  Adam model_adam_;
  Adam estimator_adam_;
};

}  // namespace

TrainResult joint_train(const Dataset& train, const Dataset& holdout,
                        PredictiveModel model, LossEstimator estimator,
                        const JointTrainConfig& config) {
  config.validate();
  train.validate();
  if (train.num_samples() == 0) throw InvalidArgument("training set is empty");
  if (train.num_features() != model.input_dim()) {
    throw ShapeError("dataset has " + std::to_string(train.num_features()) +
                     " features, model expects " + std::to_string(model.input_dim()));
  }
  if (train.num_classes > model.num_classes()) {
    throw ShapeError("dataset has more classes than model outputs");
  }
  estimator.check_compatible(model);
  const Dataset& monitor = holdout.num_samples() > 0 ? holdout : train;
  if (holdout.num_samples() > 0) {
    holdout.validate();
    if (holdout.num_features() != model.input_dim()) {
      throw ShapeError("held-out set feature count does not match model");
    }
  }

  TrainResult result{std::move(model), std::move(estimator), {}};
  Trainer trainer(train, result.model, result.estimator, config);

  auto initial = trainer.run_epoch(0, false);
  result.history.epochs.push_back(
      {0, initial.loss, initial.aux,
       estimator_spearman(result.model, result.estimator, monitor)});
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto totals = trainer.run_epoch(epoch, true);
    result.history.epochs.push_back(
        {epoch, totals.loss, totals.aux,
         estimator_spearman(result.model, result.estimator, monitor)});
  }
  return result;
}

}  // namespace lossattr
