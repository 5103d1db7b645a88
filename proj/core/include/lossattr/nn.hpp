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

#ifndef LOSSATTR_NN_HPP_
#define LOSSATTR_NN_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lossattr/rng.hpp"

namespace lossattr {

enum class Activation { kRelu, kIdentity };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct LayerSpec {
  int fan_in = 0;
  int fan_out = 0;
  Activation activation = Activation::kRelu;

  bool operator==(const LayerSpec&) const = default;
};

struct DenseLayer {
  LayerSpec spec;
  Eigen::MatrixXd weights;  // fan_out x fan_in
  Eigen::VectorXd bias;     // fan_out
};

// The classifier whose predictions are explained. A stack of dense layers;
// every layer but the last is "hidden", runs its activation and then inverted
// dropout at `dropout_rate`. The last layer produces logits.
class PredictiveModel {
 public:
  PredictiveModel() = default;
  // Copies are distinct instances: traces recorded on one are rejected by
  // backward() on the other.
  PredictiveModel(const PredictiveModel& other);
  PredictiveModel& operator=(const PredictiveModel& other);
  PredictiveModel(PredictiveModel&&) noexcept = default;
  PredictiveModel& operator=(PredictiveModel&&) noexcept = default;

  // Chain-compatibility is checked. Parameters start at zero.
  PredictiveModel(std::vector<LayerSpec> specs, double dropout_rate,
                  std::uint64_t seed);

  // input_dim -> hidden... -> num_classes, relu on hidden layers, identity on
  // the output. Weights are He-uniform, U(-sqrt(6/fan_in), sqrt(6/fan_in)),
  // drawn from derive_seed(seed, kPredictorInit); biases are zero.
  static PredictiveModel create(int input_dim, std::span<const int> hidden,
                                int num_classes, double dropout_rate,
                                std::uint64_t seed);

  int input_dim() const;
  int num_classes() const;
  int num_hidden() const { return static_cast<int>(layers_.size()) - 1; }
  int hidden_width(int hidden_index) const;
  int num_layers() const { return static_cast<int>(layers_.size()); }

  double dropout_rate() const { return dropout_rate_; }
  void set_dropout_rate(double rate);
  std::uint64_t seed() const { return seed_; }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  // Mutable access counts as a modification (bumps revision).
  std::vector<DenseLayer>& mutable_layers() {
    ++revision_;
    return layers_;
  }
  std::vector<LayerSpec> layer_specs() const;

  // Flat views over every parameter block in layer order (weights then bias,
  // weights column-major as Eigen stores them). Names look like
  // "predictor.layer1.weight". Bumps revision.
  struct ParamView {
    std::string name;
    std::span<double> values;
  };
  std::vector<ParamView> parameters();

  // Bumped by every optimizer update; lets backward() reject stale traces.
  std::uint64_t revision() const { return revision_; }
  void bump_revision() { ++revision_; }

  // Identifies this model instance for trace matching.
  std::uint64_t instance_id() const { return instance_id_; }

  bool operator==(const PredictiveModel& other) const;

 private:
  std::vector<DenseLayer> layers_;
  double dropout_rate_ = 0.0;
  std::uint64_t seed_ = 0;
  std::uint64_t revision_ = 0;
  std::uint64_t instance_id_ = 0;
};

// Activations of one forward pass over a batch. Every matrix has one column
// per sample. For hidden layer l, hidden_activations[l] is what the next layer
// (and the loss estimator) consumes: the activation output after dropout.
struct ForwardTrace {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre_activations;  // one per layer
  std::vector<Eigen::MatrixXd> hidden_activations;
  // Inverted-dropout multipliers (0 or 1/(1-p)) per hidden layer; empty when
  // dropout was inactive.
  std::vector<Eigen::MatrixXd> dropout_masks;
  Eigen::MatrixXd logits;

  std::uint64_t model_instance = 0;
  std::uint64_t model_revision = 0;

  int batch_size() const { return static_cast<int>(logits.cols()); }
  bool dropout_active() const { return !dropout_masks.empty(); }
};

// Draws inverted-dropout masks for a batch. Order of draws: hidden layer,
// then sample (column), then unit; each draw is one Rng::uniform() and the
// unit is kept iff u >= rate.
std::vector<Eigen::MatrixXd> draw_dropout_masks(const PredictiveModel& model,
                                                int batch_size, Rng& rng);

// Forward pass over the columns of `inputs`. When `dropout_active` is true and
// the model's dropout rate is positive, masks are drawn from `rng`; otherwise
// `rng` is not touched.
ForwardTrace forward(const PredictiveModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     bool dropout_active, Rng& rng);

// Dropout inactive.
ForwardTrace forward(const PredictiveModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs);

// Replays explicit masks (as produced by draw_dropout_masks). Empty `masks`
// means dropout inactive.
ForwardTrace forward_with_masks(const PredictiveModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const std::vector<Eigen::MatrixXd>& masks);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& logits);

// -log softmax(logits)[label] via log-sum-exp.
double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     int label);

// d cross_entropy / d logits = softmax(logits) - onehot(label).
Eigen::VectorXd cross_entropy_grad(
    const Eigen::Ref<const Eigen::VectorXd>& logits, int label);

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

// Shape and bitwise-value equality; never asserts on mismatched sizes.
template <typename A, typename B>
bool same_values(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

struct ModelGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> bias;

  static ModelGradients zeros_like(const PredictiveModel& model);
  ModelGradients& operator+=(const ModelGradients& other);
  ModelGradients& operator*=(double scale);
  bool all_zero() const;
};

// Gradient arriving at the outputs of a forward pass. `logits` is required
// (C x B). `taps[l]`, when present, is added to the gradient of
// hidden_activations[l] (width x B).
struct UpstreamGradients {
  Eigen::MatrixXd logits;
  std::vector<std::optional<Eigen::MatrixXd>> taps;
};

// Backpropagates through a recorded trace, summing over the batch and reusing
// the trace's dropout masks.
ModelGradients backward(const PredictiveModel& model, const ForwardTrace& trace,
                        const UpstreamGradients& upstream);

// Monte-Carlo dropout statistics of the per-pass cross-entropy.
struct PredictionInterval {
  double mu = 0.0;
  double sigma = 0.0;
  int passes = 1;
  // Per hidden layer, the elementwise mean of the activations over passes.
  std::vector<Eigen::VectorXd> mean_activations;

  double lower() const { return mu - sigma; }
  double upper() const { return mu + sigma; }
};

// `passes` dropout-active forward passes of one sample; mu and sigma are the
// mean and population standard deviation of the pass losses.
PredictionInterval mc_dropout_interval(const PredictiveModel& model,
                                       const Eigen::Ref<const Eigen::VectorXd>& x,
                                       int label, int passes, Rng& rng);

}  // namespace lossattr

#endif  // LOSSATTR_NN_HPP_
