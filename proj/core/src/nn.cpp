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

#include "lossattr/nn.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "lossattr/errors.hpp"

namespace lossattr {
namespace {

std::uint64_t next_instance_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

void check_finite(const Eigen::MatrixXd& m, const char* what, int layer) {
  if (!m.allFinite()) {
    throw NumericError(std::string("non-finite ") + what + " at layer " +
                       std::to_string(layer));
  }
}

}  // namespace

std::string activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw InvalidArgument("unknown activation: " + name);
}

PredictiveModel::PredictiveModel(std::vector<LayerSpec> specs,
                                 double dropout_rate, std::uint64_t seed)
    : seed_(seed), instance_id_(next_instance_id()) {
  if (specs.empty()) throw ShapeError("model needs at least one layer");
  for (std::size_t l = 0; l < specs.size(); ++l) {
    if (specs[l].fan_in < 1 || specs[l].fan_out < 1) {
      throw ShapeError("layer " + std::to_string(l) + " has an empty dimension");
    }
    if (l > 0 && specs[l].fan_in != specs[l - 1].fan_out) {
      throw ShapeError("layer " + std::to_string(l) + " fan_in " +
                       std::to_string(specs[l].fan_in) +
                       " does not match previous fan_out " +
                       std::to_string(specs[l - 1].fan_out));
    }
  }
  set_dropout_rate(dropout_rate);
  layers_.reserve(specs.size());
  for (const auto& s : specs) {
    layers_.push_back({s, Eigen::MatrixXd::Zero(s.fan_out, s.fan_in),
                       Eigen::VectorXd::Zero(s.fan_out)});
  }
}

PredictiveModel::PredictiveModel(const PredictiveModel& other)
    : layers_(other.layers_),
      dropout_rate_(other.dropout_rate_),
      seed_(other.seed_),
      revision_(other.revision_),
      instance_id_(next_instance_id()) {}

PredictiveModel& PredictiveModel::operator=(const PredictiveModel& other) {
  if (this != &other) {
    layers_ = other.layers_;
    dropout_rate_ = other.dropout_rate_;
    seed_ = other.seed_;
    revision_ = other.revision_;
    instance_id_ = next_instance_id();
  }
  return *this;
}

PredictiveModel PredictiveModel::create(int input_dim,
                                        std::span<const int> hidden,
                                        int num_classes, double dropout_rate,
                                        std::uint64_t seed) {
  std::vector<LayerSpec> specs;
  int fan_in = input_dim;
  for (int width : hidden) {
    specs.push_back({fan_in, width, Activation::kRelu});
    fan_in = width;
  }
  specs.push_back({fan_in, num_classes, Activation::kIdentity});
  PredictiveModel model(std::move(specs), dropout_rate, seed);

  Rng rng(derive_seed(seed, Stream::kPredictorInit));
  for (auto& layer : model.layers_) {
    const double limit = std::sqrt(6.0 / layer.spec.fan_in);
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        layer.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
  }
  return model;
}

int PredictiveModel::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().spec.fan_in;
}

int PredictiveModel::num_classes() const {
  return layers_.empty() ? 0 : layers_.back().spec.fan_out;
}

int PredictiveModel::hidden_width(int hidden_index) const {
  if (hidden_index < 0 || hidden_index >= num_hidden()) {
    throw IndexError("hidden layer " + std::to_string(hidden_index) +
                     " out of range");
  }
  return layers_[hidden_index].spec.fan_out;
}

void PredictiveModel::set_dropout_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument("dropout rate must lie in [0, 1)");
  }
  dropout_rate_ = rate;
}

std::vector<LayerSpec> PredictiveModel::layer_specs() const {
  std::vector<LayerSpec> specs;
  for (const auto& l : layers_) specs.push_back(l.spec);
  return specs;
}

std::vector<PredictiveModel::ParamView> PredictiveModel::parameters() {
  ++revision_;
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    const std::string prefix = "predictor.layer" + std::to_string(l);
    views.push_back({prefix + ".weight",
                     {layer.weights.data(), static_cast<std::size_t>(layer.weights.size())}});
    views.push_back({prefix + ".bias",
                     {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())}});
  }
  return views;
}

bool PredictiveModel::operator==(const PredictiveModel& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  if (dropout_rate_ != other.dropout_rate_ || seed_ != other.seed_) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (!(a.spec == b.spec)) return false;
    if (!same_values(a.weights, b.weights) || !same_values(a.bias, b.bias)) return false;
  }
  return true;
}

std::vector<Eigen::MatrixXd> draw_dropout_masks(const PredictiveModel& model,
                                                int batch_size, Rng& rng) {
  const double rate = model.dropout_rate();
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<Eigen::MatrixXd> masks;
  for (int l = 0; l < model.num_hidden(); ++l) {
    const int width = model.hidden_width(l);
    Eigen::MatrixXd mask(width, batch_size);
    for (int b = 0; b < batch_size; ++b) {
      for (int u = 0; u < width; ++u) {
        mask(u, b) = rng.uniform() >= rate ? keep_scale : 0.0;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

ForwardTrace forward_with_masks(const PredictiveModel& model,
                                const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                const std::vector<Eigen::MatrixXd>& masks) {
  if (model.num_layers() == 0) throw ShapeError("forward on an empty model");
  if (inputs.rows() != model.input_dim()) {
    throw ShapeError("input has " + std::to_string(inputs.rows()) +
                     " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  if (!inputs.allFinite()) throw NumericError("non-finite input");
  const bool dropout = !masks.empty();
  if (dropout && static_cast<int>(masks.size()) != model.num_hidden()) {
    throw ShapeError("dropout mask count does not match hidden layer count");
  }

  ForwardTrace trace;
  trace.input = inputs;
  trace.model_instance = model.instance_id();
  trace.model_revision = model.revision();
  const auto& layers = model.layers();
  Eigen::MatrixXd current = inputs;
  for (int l = 0; l < model.num_layers(); ++l) {
    const auto& layer = layers[l];
    Eigen::MatrixXd z = layer.weights * current;
    z.colwise() += layer.bias;
    check_finite(z, "pre-activation", l);
    trace.pre_activations.push_back(z);
    if (l == model.num_layers() - 1) {
      trace.logits = layer.spec.activation == Activation::kRelu
                         ? Eigen::MatrixXd(z.cwiseMax(0.0))
                         : z;
      break;
    }
    Eigen::MatrixXd h = layer.spec.activation == Activation::kRelu
                            ? Eigen::MatrixXd(z.cwiseMax(0.0))
                            : z;
    if (dropout) {
      const auto& mask = masks[l];
      if (mask.rows() != h.rows() || mask.cols() != h.cols()) {
        throw ShapeError("dropout mask shape mismatch at layer " +
                         std::to_string(l));
      }
      h = h.cwiseProduct(mask);
      trace.dropout_masks.push_back(mask);
    }
    trace.hidden_activations.push_back(h);
    current = std::move(h);
  }
  return trace;
}

ForwardTrace forward(const PredictiveModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                     bool dropout_active, Rng& rng) {
  if (inputs.rows() != model.input_dim()) {
    throw ShapeError("input has " + std::to_string(inputs.rows()) +
                     " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  if (dropout_active && model.dropout_rate() > 0.0 && model.num_hidden() > 0) {
    auto masks = draw_dropout_masks(model, static_cast<int>(inputs.cols()), rng);
    return forward_with_masks(model, inputs, masks);
  }
  return forward_with_masks(model, inputs, {});
}

ForwardTrace forward(const PredictiveModel& model,
                     const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  return forward_with_masks(model, inputs, {});
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum());
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

double cross_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits,
                     int label) {
  if (label < 0 || label >= logits.size()) {
    throw InvalidLabel("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(logits.size()) + ")");
  }
  if (!logits.allFinite()) throw NumericError("non-finite logits");
  const double s = log_sum_exp(logits) - logits(label);
  return s > 0.0 ? s : 0.0;
}

Eigen::VectorXd cross_entropy_grad(
    const Eigen::Ref<const Eigen::VectorXd>& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw InvalidLabel("label " + std::to_string(label) + " outside [0, " +
                       std::to_string(logits.size()) + ")");
  }
  Eigen::VectorXd g = softmax(logits);
  g(label) -= 1.0;
  return g;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

ModelGradients ModelGradients::zeros_like(const PredictiveModel& model) {
  ModelGradients g;
  for (const auto& layer : model.layers()) {
    g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(layer.bias.size()));
  }
  return g;
}

ModelGradients& ModelGradients::operator+=(const ModelGradients& other) {
  if (weights.size() != other.weights.size()) {
    throw ShapeError("gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    bias[l] += other.bias[l];
  }
  return *this;
}

ModelGradients& ModelGradients::operator*=(double scale) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= scale;
    bias[l] *= scale;
  }
  return *this;
}

bool ModelGradients::all_zero() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].isZero(0.0) || !bias[l].isZero(0.0)) return false;
  }
  return true;
}

ModelGradients backward(const PredictiveModel& model, const ForwardTrace& trace,
                        const UpstreamGradients& upstream) {
  if (trace.model_instance != model.instance_id() ||
      trace.model_revision != model.revision()) {
    throw StaleTraceError("trace was recorded on a different model or revision");
  }
  const int n_layers = model.num_layers();
  if (static_cast<int>(trace.pre_activations.size()) != n_layers ||
      static_cast<int>(trace.hidden_activations.size()) != model.num_hidden()) {
    throw StaleTraceError("trace layer count does not match model");
  }
  const int batch = trace.batch_size();
  if (upstream.logits.rows() != model.num_classes() ||
      upstream.logits.cols() != batch) {
    throw ShapeError("logit gradient shape mismatch");
  }
  if (!upstream.taps.empty() &&
      static_cast<int>(upstream.taps.size()) != model.num_hidden()) {
    throw ShapeError("tap gradient list must have one entry per hidden layer");
  }

  const auto& layers = model.layers();
  ModelGradients grads = ModelGradients::zeros_like(model);

  // Gradient w.r.t. the output of layer l (post activation, post dropout).
  Eigen::MatrixXd grad_out = upstream.logits;
  for (int l = n_layers - 1; l >= 0; --l) {
    const auto& layer = layers[l];
    const Eigen::MatrixXd& z = trace.pre_activations[l];
    const bool is_hidden = l < n_layers - 1;
    if (is_hidden) {
      if (!upstream.taps.empty() && upstream.taps[l]) {
        const auto& tap = *upstream.taps[l];
        if (tap.rows() != grad_out.rows() || tap.cols() != batch) {
          throw ShapeError("tap gradient shape mismatch at hidden layer " +
                           std::to_string(l));
        }
        grad_out += tap;
      }
      if (trace.dropout_active()) grad_out = grad_out.cwiseProduct(trace.dropout_masks[l]);
    }
    Eigen::MatrixXd grad_z = grad_out;
    if (layer.spec.activation == Activation::kRelu) {
      grad_z = (z.array() > 0.0).select(grad_out, 0.0);
    }
    const Eigen::MatrixXd& layer_input =
        l == 0 ? trace.input : trace.hidden_activations[l - 1];
    grads.weights[l].noalias() = grad_z * layer_input.transpose();
    grads.bias[l] = grad_z.rowwise().sum();
    if (l > 0) grad_out = layer.weights.transpose() * grad_z;
  }
  return grads;
}

PredictionInterval mc_dropout_interval(const PredictiveModel& model,
                                       const Eigen::Ref<const Eigen::VectorXd>& x,
                                       int label, int passes, Rng& rng) {
  if (passes < 1) throw InvalidArgument("mc_dropout_interval needs T >= 1");
  PredictionInterval interval;
  interval.passes = passes;

  if (model.dropout_rate() == 0.0 || model.num_hidden() == 0) {
    // Every pass would be identical.
    auto trace = forward(model, x);
    interval.mu = cross_entropy(trace.logits.col(0), label);
    interval.sigma = 0.0;
    for (const auto& h : trace.hidden_activations) {
      interval.mean_activations.push_back(h.col(0));
    }
    return interval;
  }

  std::vector<double> losses;
  losses.reserve(passes);
  for (int l = 0; l < model.num_hidden(); ++l) {
    interval.mean_activations.push_back(Eigen::VectorXd::Zero(model.hidden_width(l)));
  }
  for (int t = 0; t < passes; ++t) {
    auto trace = forward(model, x, true, rng);
    losses.push_back(cross_entropy(trace.logits.col(0), label));
    for (int l = 0; l < model.num_hidden(); ++l) {
      interval.mean_activations[l] += trace.hidden_activations[l].col(0);
    }
  }
  for (auto& m : interval.mean_activations) m /= static_cast<double>(passes);

  double sum = 0.0;
  for (double s : losses) sum += s;
  interval.mu = sum / passes;
  if (passes > 1) {
    double acc = 0.0;
    for (double s : losses) acc += (s - interval.mu) * (s - interval.mu);
    interval.sigma = std::sqrt(acc / passes);
  }
  return interval;
}

}  // namespace lossattr
