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

#include "lossattr/loss_estimator.hpp"

#include <cmath>

#include "lossattr/errors.hpp"
#include "lossattr/rng.hpp"

namespace lossattr {

LossEstimator::LossEstimator(std::vector<int> taps, std::vector<int> tap_dims,
                             int units)
    : taps_(std::move(taps)), units_(units) {
  if (taps_.empty()) throw InvalidArgument("loss estimator needs at least one tap");
  if (taps_.size() != tap_dims.size()) {
    throw ShapeError("one dimension per tap is required");
  }
  if (units < 1) throw InvalidArgument("loss estimator needs units >= 1");
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    if (tap_dims[i] < 1) throw ShapeError("tap dimension must be positive");
    projections_.push_back({Eigen::MatrixXd::Zero(units, tap_dims[i]),
                            Eigen::VectorXd::Zero(units)});
  }
  head_weights_ = Eigen::RowVectorXd::Zero(units * static_cast<int>(taps_.size()));
}

LossEstimator LossEstimator::create(const PredictiveModel& model,
                                    std::vector<int> taps, int units,
                                    std::uint64_t seed) {
  std::vector<int> dims;
  for (int t : taps) {
    if (t < 0 || t >= model.num_hidden()) {
      throw ShapeError("tap " + std::to_string(t) + " is not a hidden layer");
    }
    dims.push_back(model.hidden_width(t));
  }
  LossEstimator est(std::move(taps), std::move(dims), units);
  Rng rng(derive_seed(seed, Stream::kEstimatorInit));
  for (auto& p : est.projections_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.weights.cols()));
    for (Eigen::Index c = 0; c < p.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < p.weights.rows(); ++r) {
        p.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
  }
  const double head_limit = 1.0 / std::sqrt(static_cast<double>(est.head_weights_.size()));
  for (Eigen::Index i = 0; i < est.head_weights_.size(); ++i) {
    est.head_weights_(i) = rng.uniform(-head_limit, head_limit);
  }
  return est;
}

LossEstimator LossEstimator::create(const PredictiveModel& model, int units,
                                    std::uint64_t seed) {
  std::vector<int> taps;
  for (int l = 0; l < model.num_hidden(); ++l) taps.push_back(l);
  return create(model, std::move(taps), units, seed);
}

void LossEstimator::check_compatible(const PredictiveModel& model) const {
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    const int t = taps_[i];
    if (t < 0 || t >= model.num_hidden()) {
      throw ShapeError("estimator tap " + std::to_string(t) +
                       " is not a hidden layer of the model");
    }
    if (model.hidden_width(t) != tap_dim(static_cast<int>(i))) {
      throw ShapeError("estimator tap " + std::to_string(t) + " expects width " +
                       std::to_string(tap_dim(static_cast<int>(i))) +
                       ", model has " + std::to_string(model.hidden_width(t)));
    }
  }
}

std::vector<LossEstimator::ParamView> LossEstimator::parameters() {
  std::vector<ParamView> views;
  for (std::size_t i = 0; i < projections_.size(); ++i) {
    auto& p = projections_[i];
    const std::string prefix = "estimator.tap" + std::to_string(i);
    views.push_back({prefix + ".weight",
                     {p.weights.data(), static_cast<std::size_t>(p.weights.size())}});
    views.push_back({prefix + ".bias",
                     {p.bias.data(), static_cast<std::size_t>(p.bias.size())}});
  }
  views.push_back({"estimator.head.weight",
                   {head_weights_.data(), static_cast<std::size_t>(head_weights_.size())}});
  views.push_back({"estimator.head.bias", {&head_bias_, 1}});
  return views;
}

EstimatorTrace estimator_forward(const LossEstimator& estimator,
                                 std::span<const Eigen::MatrixXd> tap_activations) {
  const auto& projections = estimator.projections();
  if (tap_activations.size() != projections.size()) {
    throw ShapeError("estimator expects " + std::to_string(projections.size()) +
                     " tap inputs, got " + std::to_string(tap_activations.size()));
  }
  const Eigen::Index batch = tap_activations.empty() ? 0 : tap_activations[0].cols();
  const int units = estimator.units();
  EstimatorTrace trace;
  trace.concat.resize(units * static_cast<Eigen::Index>(projections.size()), batch);
  for (std::size_t i = 0; i < projections.size(); ++i) {
    const auto& a = tap_activations[i];
    if (a.rows() != projections[i].weights.cols() || a.cols() != batch) {
      throw ShapeError("tap " + std::to_string(i) + " activation has shape " +
                       std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                       ", expected " +
                       std::to_string(projections[i].weights.cols()) + "x" +
                       std::to_string(batch));
    }
    Eigen::MatrixXd z = projections[i].weights * a;
    z.colwise() += projections[i].bias;
    trace.concat.middleRows(static_cast<Eigen::Index>(i) * units, units) = z.cwiseMax(0.0);
    trace.tap_inputs.push_back(a);
    trace.pre_activations.push_back(std::move(z));
  }
  trace.estimates = estimator.head_weights() * trace.concat;
  trace.estimates.array() += estimator.head_bias();
  if (!trace.estimates.allFinite()) throw NumericError("non-finite loss estimate");
  return trace;
}

std::vector<Eigen::MatrixXd> gather_taps(
    const LossEstimator& estimator,
    const std::vector<Eigen::MatrixXd>& hidden_activations) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(estimator.taps().size());
  for (int t : estimator.taps()) {
    if (t < 0 || t >= static_cast<int>(hidden_activations.size())) {
      throw ShapeError("estimator tap " + std::to_string(t) +
                       " has no matching hidden activation");
    }
    out.push_back(hidden_activations[t]);
  }
  return out;
}

double estimate_loss(const LossEstimator& estimator,
                     std::span<const Eigen::VectorXd> tap_activations) {
  std::vector<Eigen::MatrixXd> cols;
  cols.reserve(tap_activations.size());
  for (const auto& v : tap_activations) cols.emplace_back(v);
  return estimator_forward(estimator, cols).estimates(0);
}

Eigen::RowVectorXd estimate_loss(const LossEstimator& estimator,
                                 const ForwardTrace& trace) {
  auto taps = gather_taps(estimator, trace.hidden_activations);
  return estimator_forward(estimator, taps).estimates;
}

EstimatorGradients EstimatorGradients::zeros_like(const LossEstimator& estimator) {
  EstimatorGradients g;
  for (const auto& p : estimator.projections()) {
    g.proj_weights.push_back(Eigen::MatrixXd::Zero(p.weights.rows(), p.weights.cols()));
    g.proj_bias.push_back(Eigen::VectorXd::Zero(p.bias.size()));
  }
  g.head_weights = Eigen::RowVectorXd::Zero(estimator.head_weights().size());
  return g;
}

EstimatorGradients& EstimatorGradients::operator+=(const EstimatorGradients& other) {
  for (std::size_t i = 0; i < proj_weights.size(); ++i) {
    proj_weights[i] += other.proj_weights[i];
    proj_bias[i] += other.proj_bias[i];
  }
  head_weights += other.head_weights;
  head_bias += other.head_bias;
  return *this;
}

bool LossEstimator::operator==(const LossEstimator& other) const {
  if (taps_ != other.taps_ || units_ != other.units_) return false;
  if (projections_.size() != other.projections_.size()) return false;
  for (std::size_t t = 0; t < projections_.size(); ++t) {
    if (!same_values(projections_[t].weights, other.projections_[t].weights) ||
        !same_values(projections_[t].bias, other.projections_[t].bias)) {
      return false;
    }
  }
  return same_values(head_weights_, other.head_weights_) && head_bias_ == other.head_bias_;
}

bool EstimatorGradients::all_zero() const {
  for (std::size_t i = 0; i < proj_weights.size(); ++i) {
    if (!proj_weights[i].isZero(0.0) || !proj_bias[i].isZero(0.0)) return false;
  }
  return head_weights.isZero(0.0) && head_bias == 0.0;
}

EstimatorBackward estimator_backward(const LossEstimator& estimator,
                                     const EstimatorTrace& trace,
                                     const Eigen::Ref<const Eigen::RowVectorXd>& upstream) {
  if (upstream.size() != trace.estimates.size()) {
    throw ShapeError("estimator upstream gradient has wrong batch size");
  }
  const int units = estimator.units();
  EstimatorBackward out;
  out.params = EstimatorGradients::zeros_like(estimator);
  out.params.head_weights = upstream * trace.concat.transpose();
  out.params.head_bias = upstream.sum();

  // d/d concat = head^T * upstream  (n_concat x B)
  Eigen::MatrixXd grad_concat = estimator.head_weights().transpose() * upstream;
  const auto& projections = estimator.projections();
  for (std::size_t i = 0; i < projections.size(); ++i) {
    const auto& z = trace.pre_activations[i];
    Eigen::MatrixXd g = grad_concat.middleRows(static_cast<Eigen::Index>(i) * units, units);
    g = (z.array() > 0.0).select(g, 0.0);
    out.params.proj_weights[i].noalias() = g * trace.tap_inputs[i].transpose();
    out.params.proj_bias[i] = g.rowwise().sum();
    out.tap_grads.push_back(projections[i].weights.transpose() * g);
  }
  return out;
}

std::vector<ParamBlock> param_blocks(LossEstimator& estimator,
                                     const EstimatorGradients& grads) {
  auto views = estimator.parameters();
  std::vector<ParamBlock> blocks;
  const std::size_t n = grads.proj_weights.size();
  if (views.size() != 2 * n + 2) throw ShapeError("estimator gradient mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    blocks.push_back({views[2 * i].name, views[2 * i].values,
                      {grads.proj_weights[i].data(),
                       static_cast<std::size_t>(grads.proj_weights[i].size())}});
    blocks.push_back({views[2 * i + 1].name, views[2 * i + 1].values,
                      {grads.proj_bias[i].data(),
                       static_cast<std::size_t>(grads.proj_bias[i].size())}});
  }
  blocks.push_back({views[2 * n].name, views[2 * n].values,
                    {grads.head_weights.data(),
                     static_cast<std::size_t>(grads.head_weights.size())}});
  blocks.push_back({views[2 * n + 1].name, views[2 * n + 1].values,
                    {&grads.head_bias, 1}});
  return blocks;
}

void optimizer_step(LossEstimator& estimator, const EstimatorGradients& grads,
                    Adam& adam) {
  auto blocks = param_blocks(estimator, grads);
  adam.step(blocks);
}

std::string pair_indicator_name(PairIndicator p) {
  return p == PairIndicator::kSigned ? "signed" : "literal";
}

PairIndicator parse_pair_indicator(const std::string& name) {
  if (name == "signed") return PairIndicator::kSigned;
  if (name == "literal") return PairIndicator::kLiteral;
  throw InvalidArgument("unknown pair indicator: " + name);
}

namespace {

double indicator_value(const LossPair& p, PairIndicator indicator) {
  if (p.s_i > p.s_j) return 1.0;
  return indicator == PairIndicator::kSigned ? -1.0 : 0.0;
}

void check_pair(const LossPair& p) {
  if (!std::isfinite(p.s_i) || !std::isfinite(p.s_j) ||
      !std::isfinite(p.estimate_i) || !std::isfinite(p.estimate_j)) {
    throw NumericError("non-finite value in contrastive pair");
  }
}

}  // namespace

double contrastive_loss(std::span<const LossPair> pairs, double gamma,
                        PairIndicator indicator) {
  if (pairs.empty()) throw InvalidArgument("contrastive loss needs at least one pair");
  double total = 0.0;
  for (const auto& p : pairs) {
    check_pair(p);
    const double arg = -indicator_value(p, indicator) * (p.estimate_i - p.estimate_j) + gamma;
    total += arg > 0.0 ? arg : 0.0;
  }
  return total;
}

std::vector<PairGradient> contrastive_loss_grad(std::span<const LossPair> pairs,
                                                double gamma,
                                                PairIndicator indicator) {
  std::vector<PairGradient> grads;
  grads.reserve(pairs.size());
  for (const auto& p : pairs) {
    check_pair(p);
    const double sign = indicator_value(p, indicator);
    const double arg = -sign * (p.estimate_i - p.estimate_j) + gamma;
    if (arg > 0.0) {
      grads.push_back({-sign, sign});
    } else {
      grads.push_back({0.0, 0.0});
    }
  }
  return grads;
}

double dropout_calibration_loss(double estimate, double mu, double sigma,
                                double xi) {
  if (!std::isfinite(estimate) || !std::isfinite(mu) || !std::isfinite(sigma) ||
      !std::isfinite(xi)) {
    throw NumericError("non-finite input to calibration loss");
  }
  const double above = estimate - (mu + sigma) + xi;
  const double below = (mu - sigma) - estimate + xi;
  return (above > 0.0 ? above : 0.0) + (below > 0.0 ? below : 0.0);
}

double dropout_calibration_loss(double estimate,
                                const PredictionInterval& interval, double xi) {
  return dropout_calibration_loss(estimate, interval.mu, interval.sigma, xi);
}

double dropout_calibration_grad(double estimate, double mu, double sigma,
                                double xi) {
  double g = 0.0;
  if (estimate - (mu + sigma) + xi > 0.0) g += 1.0;
  if ((mu - sigma) - estimate + xi > 0.0) g -= 1.0;
  return g;
}

}  // namespace lossattr
