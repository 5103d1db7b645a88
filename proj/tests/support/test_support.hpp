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

// Reference implementations used only by tests. Nothing here calls the
// library's numeric kernels: forward passes are plain loops over the stored
// weights, losses are evaluated in long double.
#ifndef LOSSATTR_TESTS_TEST_SUPPORT_HPP_
#define LOSSATTR_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lossattr/joint_train.hpp"
#include "lossattr/loss_estimator.hpp"
#include "lossattr/nn.hpp"
#include "lossattr/rng.hpp"

namespace lossattr::testing {

struct LoopTrace {
  std::vector<double> logits;
  std::vector<std::vector<double>> hidden;  // post-activation, post-mask
};

// masks[l][u] multiplies hidden unit u of layer l (empty: no dropout).
inline LoopTrace loop_forward(const PredictiveModel& model, const std::vector<double>& x,
                              const std::vector<std::vector<double>>& masks = {}) {
  LoopTrace out;
  std::vector<double> h = x;
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& W = layers[l].weights;
    std::vector<double> z(W.rows());
    for (int r = 0; r < W.rows(); ++r) {
      double acc = 0.0;
      for (int c = 0; c < W.cols(); ++c) acc += W(r, c) * h[c];
      z[r] = acc + layers[l].bias(r);
    }
    if (l + 1 < layers.size()) {
      for (std::size_t u = 0; u < z.size(); ++u) {
        z[u] = std::max(0.0, z[u]);
        if (!masks.empty()) z[u] *= masks[l][u];
      }
      out.hidden.push_back(z);
    }
    h = z;
  }
  out.logits = h;
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline double loop_cross_entropy(const std::vector<double>& z, int label) {
  long double m = *std::max_element(z.begin(), z.end());
  long double s = 0.0L;
  for (double v : z) s += std::exp(static_cast<long double>(v) - m);
  return static_cast<double>(-(static_cast<long double>(z[label]) - m - std::log(s)));
}

inline double loop_estimate(const LossEstimator& est,
                            const std::vector<std::vector<double>>& tap_inputs) {
  double out = est.head_bias();
  int k = 0;
  for (std::size_t t = 0; t < est.taps().size(); ++t) {
    const auto& p = est.projections()[t];
    for (int u = 0; u < p.weights.rows(); ++u, ++k) {
      double acc = p.bias(u);
      for (int c = 0; c < p.weights.cols(); ++c) acc += p.weights(u, c) * tap_inputs[t][c];
      out += est.head_weights()(k) * std::max(0.0, acc);
    }
  }
  return out;
}

// Central difference of `objective` with respect to every entry of `values`.
inline std::vector<double> central_differences(std::span<double> values,
                                               const std::function<double()>& objective,
                                               double h = 1e-4) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = objective();
    values[i] = saved - h;
    const double down = objective();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Flattens gradients in the same order as PredictiveModel::parameters()
// (weights column-major, then bias, layer by layer).
inline std::vector<double> flatten(const ModelGradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.insert(out.end(), g.weights[l].data(), g.weights[l].data() + g.weights[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

inline std::vector<double> flatten(const EstimatorGradients& g) {
  std::vector<double> out;
  for (std::size_t t = 0; t < g.proj_weights.size(); ++t) {
    out.insert(out.end(), g.proj_weights[t].data(),
               g.proj_weights[t].data() + g.proj_weights[t].size());
    out.insert(out.end(), g.proj_bias[t].data(), g.proj_bias[t].data() + g.proj_bias[t].size());
  }
  out.insert(out.end(), g.head_weights.data(), g.head_weights.data() + g.head_weights.size());
  out.push_back(g.head_bias);
  return out;
}

// Random network of at most 3 layers and 16 units with non-zero biases.
struct SmallProblem {
  PredictiveModel model;
  LossEstimator estimator;
  Eigen::MatrixXd inputs;  // d x B
  std::vector<int> labels;
};

inline SmallProblem random_small_problem(std::uint64_t seed, int batch = 4,
                                         double dropout = 0.0) {
  Rng rng(seed);
  const int d = 2 + static_cast<int>(rng.next() % 4);
  const int classes = 2 + static_cast<int>(rng.next() % 3);
  const int depth = 1 + static_cast<int>(rng.next() % 2);
  std::vector<int> hidden;
  for (int i = 0; i < depth; ++i) hidden.push_back(2 + static_cast<int>(rng.next() % 15));
  SmallProblem p{PredictiveModel::create(d, hidden, classes, dropout, seed), {}, {}, {}};
  for (auto& layer : p.model.mutable_layers()) {
    for (int i = 0; i < layer.bias.size(); ++i) layer.bias(i) = rng.uniform(-0.5, 0.5);
  }
  const int units = 2 + static_cast<int>(rng.next() % 7);
  p.estimator = LossEstimator::create(p.model, units, seed + 1);
  for (auto& proj : p.estimator.mutable_projections()) {
    for (int i = 0; i < proj.bias.size(); ++i) proj.bias(i) = rng.uniform(-0.5, 0.5);
  }
  p.estimator.set_head_bias(rng.uniform(-0.5, 0.5));
  p.inputs.resize(d, batch);
  for (int c = 0; c < batch; ++c) {
    for (int r = 0; r < d; ++r) p.inputs(r, c) = rng.uniform(-2.0, 2.0);
  }
  for (int b = 0; b < batch; ++b) p.labels.push_back(static_cast<int>(rng.next() % classes));
  return p;
}

struct GradCheck {
  double max_rel_model = 0.0;
  double max_rel_estimator = 0.0;
  double max_rel() const { return std::max(max_rel_model, max_rel_estimator); }
};

// Straight-line objective of one contrastive step with fixed targets:
//   mean_b CE(b) + lambda * mean_pairs hinge.
inline double loop_contrastive_objective(const PredictiveModel& model, const LossEstimator& est,
                                         const Eigen::MatrixXd& inputs,
                                         const std::vector<int>& labels,
                                         const std::vector<double>& targets, double gamma,
                                         double lambda) {
  const int B = static_cast<int>(inputs.cols());
  std::vector<double> est_values(B);
  double ce = 0.0;
  for (int b = 0; b < B; ++b) {
    auto tr = loop_forward(model, to_std(inputs.col(b)));
    ce += loop_cross_entropy(tr.logits, labels[b]);
    std::vector<std::vector<double>> taps;
    for (int t : est.taps()) taps.push_back(tr.hidden[t]);
    est_values[b] = loop_estimate(est, taps);
  }
  double aux = 0.0;
  const int half = B / 2;
  for (int k = 0; k < half; ++k) {
    const double sign = targets[k] > targets[k + half] ? 1.0 : -1.0;
    aux += std::max(0.0, -sign * (est_values[k] - est_values[k + half]) + gamma);
  }
  return ce / B + lambda * aux / half;
}

// Calibration objective with fixed masks and interval: CE averaged over all
// T*B passes plus lambda * mean_b hinge on s_hat(mean activations).
inline double loop_calibration_objective(const PredictiveModel& model, const LossEstimator& est,
                                         const Eigen::MatrixXd& inputs,
                                         const std::vector<int>& labels,
                                         const std::vector<Eigen::MatrixXd>& stacked_masks,
                                         int passes, const std::vector<double>& mu,
                                         const std::vector<double>& sigma, double xi,
                                         double lambda) {
  const int B = static_cast<int>(inputs.cols());
  double ce = 0.0;
  double aux = 0.0;
  for (int b = 0; b < B; ++b) {
    std::vector<std::vector<double>> mean_hidden;
    for (int t = 0; t < passes; ++t) {
      std::vector<std::vector<double>> masks;
      for (const auto& m : stacked_masks) masks.push_back(to_std(m.col(t * B + b)));
      auto tr = loop_forward(model, to_std(inputs.col(b)), masks);
      ce += loop_cross_entropy(tr.logits, labels[b]);
      if (mean_hidden.empty()) {
        mean_hidden = tr.hidden;
        for (auto& h : mean_hidden) std::fill(h.begin(), h.end(), 0.0);
      }
      for (std::size_t l = 0; l < tr.hidden.size(); ++l) {
        for (std::size_t u = 0; u < tr.hidden[l].size(); ++u) {
          mean_hidden[l][u] += tr.hidden[l][u] / passes;
        }
      }
    }
    std::vector<std::vector<double>> taps;
    for (int t : est.taps()) taps.push_back(mean_hidden[t]);
    const double s = loop_estimate(est, taps);
    aux += std::max(0.0, s - (mu[b] + sigma[b]) + xi) +
           std::max(0.0, (mu[b] - sigma[b]) - s + xi);
  }
  return ce / (static_cast<double>(B) * passes) + lambda * aux / B;
}

// Relative error of one parameter tensor, ||a - n|| / max(||a||, ||n||, floor).
inline double tensor_rel_error(std::span<const double> analytic, std::span<const double> numeric,
                               double floor = 1e-6) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

// Objective kinds for gradient checks.
enum class CheckedLoss { kMain, kContrastive, kCalibration };

// Smallest distance of any ReLU input (classifier and estimator) from its kink
// for the given masks. With `passes` > 1 the columns hold pass t of sample b at
// t * B + b and the estimator sees the pass-averaged activations, as in a
// calibration step. Central differences are only meaningful away from kinks.
inline double relu_margin(const PredictiveModel& model, const LossEstimator& est,
                          const Eigen::MatrixXd& inputs,
                          const std::vector<Eigen::MatrixXd>& masks, int passes = 1) {
  auto tr = forward_with_masks(model, inputs, masks);
  double margin = std::numeric_limits<double>::infinity();
  for (int l = 0; l + 1 < static_cast<int>(tr.pre_activations.size()); ++l) {
    margin = std::min(margin, tr.pre_activations[l].cwiseAbs().minCoeff());
  }
  auto hidden = tr.hidden_activations;
  const Eigen::Index B = inputs.cols() / passes;
  for (auto& h : hidden) {
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(h.rows(), B);
    for (int t = 0; t < passes; ++t) mean += h.middleCols(t * B, B) / passes;
    h = mean;
  }
  auto taps = gather_taps(est, hidden);
  auto et = estimator_forward(est, taps);
  for (const auto& z : et.pre_activations) margin = std::min(margin, z.cwiseAbs().minCoeff());
  return margin;
}

// Compares the analytic step gradients against central differences of the
// loop objectives. kMain uses lambda = 0; the other two include the
// auxiliary term with lambda = 1. Problems whose ReLU or hinge arguments lie
// within `kink_margin` of a kink are redrawn (deterministically from `seed`).
inline GradCheck check_gradients(std::uint64_t seed, CheckedLoss which, double h = 1e-4,
                                 double kink_margin = 1e-2) {
  const bool calib = which == CheckedLoss::kCalibration;
  JointTrainConfig cfg;
  cfg.gamma = 1.0;
  cfg.xi = 0.05;
  cfg.lambda_aux = which == CheckedLoss::kMain ? 0.0 : 1.0;
  cfg.mc_passes = 3;
  cfg.objective = calib ? Objective::kDropoutCalibration : Objective::kContrastive;

  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t s = derive_seed(seed, attempt);
    auto p = random_small_problem(s, 4, calib ? 0.3 : 0.0);
    const int B = static_cast<int>(p.inputs.cols());

    std::vector<Eigen::MatrixXd> masks;
    std::vector<double> targets, mu(B), sigma(B);
    if (calib) {
      Rng mask_rng(s ^ 0x5eedULL);
      masks = draw_dropout_masks(p.model, B * cfg.mc_passes, mask_rng);
      Rng r(s + 7);
      for (int b = 0; b < B; ++b) {
        mu[b] = r.uniform(0.2, 2.0);
        sigma[b] = r.uniform(0.0, 0.3);
      }
    } else {
      for (int b = 0; b < B; ++b) {
        targets.push_back(loop_cross_entropy(
            loop_forward(p.model, to_std(p.inputs.col(b))).logits, p.labels[b]));
      }
    }

    Eigen::MatrixXd replicated = p.inputs;
    if (calib) {
      replicated.resize(p.inputs.rows(), B * cfg.mc_passes);
      for (int t = 0; t < cfg.mc_passes; ++t) replicated.middleCols(t * B, B) = p.inputs;
    }
    double margin = relu_margin(p.model, p.estimator, replicated, masks,
                                calib ? cfg.mc_passes : 1);

    StepResult step;
    if (calib) {
      step = calibration_step(p.model, p.estimator, p.inputs, p.labels, cfg, masks,
                              std::span<const double>(mu), std::span<const double>(sigma));
      for (int b = 0; b < B; ++b) {
        const double e = step.estimates(b);
        margin = std::min({margin, std::abs(e - (mu[b] + sigma[b]) + cfg.xi),
                           std::abs((mu[b] - sigma[b]) - e + cfg.xi)});
      }
    } else {
      step = contrastive_step(p.model, p.estimator, p.inputs, p.labels, cfg, {},
                              std::span<const double>(targets));
      const int half = B / 2;
      for (int k = 0; k < half; ++k) {
        const double sign = targets[k] > targets[k + half] ? 1.0 : -1.0;
        margin = std::min(margin, std::abs(-sign * (step.estimates(k) - step.estimates(k + half)) +
                                           cfg.gamma));
      }
    }
    if (margin < kink_margin) continue;

    std::function<double()> objective;
    if (calib) {
      objective = [&] {
        return loop_calibration_objective(p.model, p.estimator, p.inputs, p.labels, masks,
                                          cfg.mc_passes, mu, sigma, cfg.xi, cfg.lambda_aux);
      };
    } else {
      objective = [&] {
        return loop_contrastive_objective(p.model, p.estimator, p.inputs, p.labels, targets,
                                          cfg.gamma, cfg.lambda_aux);
      };
    }

    GradCheck out;
    const auto analytic_model = flatten(step.model);
    std::size_t offset = 0;
    for (auto& view : p.model.parameters()) {
      auto g = central_differences(view.values, objective, h);
      out.max_rel_model = std::max(
          out.max_rel_model,
          tensor_rel_error(std::span(analytic_model).subspan(offset, g.size()), g));
      offset += g.size();
    }
    const auto analytic_est = flatten(step.estimator);
    offset = 0;
    for (auto& view : p.estimator.parameters()) {
      auto g = central_differences(view.values, objective, h);
      out.max_rel_estimator = std::max(
          out.max_rel_estimator,
          tensor_rel_error(std::span(analytic_est).subspan(offset, g.size()), g));
      offset += g.size();
    }
    return out;
  }
}

}  // namespace lossattr::testing

#endif  // LOSSATTR_TESTS_TEST_SUPPORT_HPP_
