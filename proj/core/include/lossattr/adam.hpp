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

#ifndef LOSSATTR_ADAM_HPP_
#define LOSSATTR_ADAM_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lossattr/nn.hpp"

namespace lossattr {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One parameter tensor and its gradient, flattened.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

// Adam with bias-corrected moments:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   w <- w - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Moment buffers are created on the first step and keyed by block position,
// so the same sequence of blocks must be passed every time.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Throws NumericError naming the offending block when a gradient is
  // non-finite (nothing is updated in that case) or an update would make a
  // parameter non-finite.
  void step(std::span<const ParamBlock> blocks);

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Pairs a model's parameters with matching gradients, in layer order.
std::vector<ParamBlock> param_blocks(PredictiveModel& model,
                                     const ModelGradients& grads);

// Applies one Adam update to `model` and bumps its revision.
void optimizer_step(PredictiveModel& model, const ModelGradients& grads,
                    Adam& adam);

}  // namespace lossattr

#endif  // LOSSATTR_ADAM_HPP_
