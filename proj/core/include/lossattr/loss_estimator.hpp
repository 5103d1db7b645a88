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

#ifndef LOSSATTR_LOSS_ESTIMATOR_HPP_
#define LOSSATTR_LOSS_ESTIMATOR_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lossattr/adam.hpp"
#include "lossattr/nn.hpp"

namespace lossattr {

// Auxiliary network that predicts the classifier's loss from its hidden
// activations. Each tapped hidden layer goes through its own linear map and
// ReLU; the projections are concatenated and a linear head emits one scalar.
class LossEstimator {
 public:
  struct Projection {
    Eigen::MatrixXd weights;  // units x tap_dim
    Eigen::VectorXd bias;     // units
  };

  LossEstimator() = default;

  // All-zero parameters. `tap_dims[i]` is the width of hidden layer taps[i].
  LossEstimator(std::vector<int> taps, std::vector<int> tap_dims, int units);

  // Taps default to every hidden layer of `model`. Projections use
  // He-uniform init, the head U(-1/sqrt(n), 1/sqrt(n)), all from
  // derive_seed(seed, kEstimatorInit).
  static LossEstimator create(const PredictiveModel& model,
                              std::vector<int> taps, int units,
                              std::uint64_t seed);
  static LossEstimator create(const PredictiveModel& model, int units,
                              std::uint64_t seed);

  const std::vector<int>& taps() const { return taps_; }
  int units() const { return units_; }
  int tap_dim(int i) const {
    return static_cast<int>(projections_[i].weights.cols());
  }

  const std::vector<Projection>& projections() const { return projections_; }
  std::vector<Projection>& mutable_projections() { return projections_; }
  const Eigen::RowVectorXd& head_weights() const { return head_weights_; }
  Eigen::RowVectorXd& mutable_head_weights() { return head_weights_; }
  double head_bias() const { return head_bias_; }
  void set_head_bias(double b) { head_bias_ = b; }

  // Throws ShapeError unless every tap names a hidden layer of `model` with a
  // matching width.
  void check_compatible(const PredictiveModel& model) const;

  struct ParamView {
    std::string name;
    std::span<double> values;
  };
  // Projection weights and biases in tap order, then head weights, head bias.
  std::vector<ParamView> parameters();

  bool operator==(const LossEstimator& other) const;

 private:
  std::vector<int> taps_;
  int units_ = 0;
  std::vector<Projection> projections_;
  Eigen::RowVectorXd head_weights_;
  double head_bias_ = 0.0;
};

// Intermediate values of one estimator pass over a batch (columns = samples).
struct EstimatorTrace {
  std::vector<Eigen::MatrixXd> tap_inputs;
  std::vector<Eigen::MatrixXd> pre_activations;
  Eigen::MatrixXd concat;  // (taps * units) x B
  Eigen::RowVectorXd estimates;
};

// `tap_activations[i]` feeds taps()[i]; one column per sample.
EstimatorTrace estimator_forward(const LossEstimator& estimator,
                                 std::span<const Eigen::MatrixXd> tap_activations);

// Picks the tapped layers out of a full hidden-activation list.
std::vector<Eigen::MatrixXd> gather_taps(
    const LossEstimator& estimator,
    const std::vector<Eigen::MatrixXd>& hidden_activations);

// s_hat for a single sample; `tap_activations[i]` is one vector per tap.
double estimate_loss(const LossEstimator& estimator,
                     std::span<const Eigen::VectorXd> tap_activations);

// Batched estimate straight from a forward trace.
Eigen::RowVectorXd estimate_loss(const LossEstimator& estimator,
                                 const ForwardTrace& trace);

struct EstimatorGradients {
  std::vector<Eigen::MatrixXd> proj_weights;
  std::vector<Eigen::VectorXd> proj_bias;
  Eigen::RowVectorXd head_weights;
  double head_bias = 0.0;

  static EstimatorGradients zeros_like(const LossEstimator& estimator);
  EstimatorGradients& operator+=(const EstimatorGradients& other);
  bool all_zero() const;
};

struct EstimatorBackward {
  EstimatorGradients params;
  std::vector<Eigen::MatrixXd> tap_grads;  // d/d tap input, per tap
};

// `upstream` holds d(objective)/d(s_hat) per sample.
EstimatorBackward estimator_backward(const LossEstimator& estimator,
                                     const EstimatorTrace& trace,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& upstream);

std::vector<ParamBlock> param_blocks(LossEstimator& estimator,
                                     const EstimatorGradients& grads);
void optimizer_step(LossEstimator& estimator, const EstimatorGradients& grads,
                    Adam& adam);

// ---------------------------------------------------------------------------
// Auxiliary objectives. Targets (s, mu, sigma) are plain numbers: no gradient
// flows into them.

// How the ordering indicator of a pair is read.
//   kSigned:  I = +1 if s_i > s_j, else -1 (ties count as -1).
//   kLiteral: I = 1 if s_i > s_j, else 0; the second branch is then a constant
//             gamma with zero gradient.
enum class PairIndicator { kSigned, kLiteral };

std::string pair_indicator_name(PairIndicator p);
PairIndicator parse_pair_indicator(const std::string& name);

struct LossPair {
  double s_i = 0.0;
  double s_j = 0.0;
  double estimate_i = 0.0;
  double estimate_j = 0.0;
};

// Sum over pairs of max(0, -I(s_i, s_j) * (est_i - est_j) + gamma).
double contrastive_loss(std::span<const LossPair> pairs, double gamma,
                        PairIndicator indicator = PairIndicator::kSigned);

// d/d est_i and d/d est_j for every pair. The hinge counts as active only
// when its argument is strictly positive.
struct PairGradient {
  double d_estimate_i = 0.0;
  double d_estimate_j = 0.0;
};
std::vector<PairGradient> contrastive_loss_grad(
    std::span<const LossPair> pairs, double gamma,
    PairIndicator indicator = PairIndicator::kSigned);

// max(0, s_hat - (mu + sigma) + xi) + max(0, (mu - sigma) - s_hat + xi).
double dropout_calibration_loss(double estimate, double mu, double sigma,
                                double xi);
double dropout_calibration_loss(double estimate,
                                const PredictionInterval& interval, double xi);

// d/d s_hat, in {-1, 0, +1}. When xi > sigma both hinges can fire at once
// and their slopes cancel.
double dropout_calibration_grad(double estimate, double mu, double sigma,
                                double xi);

}  // namespace lossattr

#endif  // LOSSATTR_LOSS_ESTIMATOR_HPP_
