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

#include "lossattr/adam.hpp"

#include <cmath>

#include "lossattr/errors.hpp"

namespace lossattr {

void Adam::step(std::span<const ParamBlock> blocks) {
  if (m_.empty()) {
    for (const auto& b : blocks) {
      m_.emplace_back(b.values.size(), 0.0);
      v_.emplace_back(b.values.size(), 0.0);
    }
  }
  if (m_.size() != blocks.size()) {
    throw ShapeError("Adam: parameter block count changed between steps");
  }
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    if (b.values.size() != b.grads.size() || b.values.size() != m_[k].size()) {
      throw ShapeError("Adam: size mismatch in block " + b.name);
    }
    for (double g : b.grads) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in " + b.name);
      }
    }
  }

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      b.values[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      if (!std::isfinite(b.values[i])) {
        throw NumericError("non-finite parameter after update in " + b.name);
      }
    }
  }
}

std::vector<ParamBlock> param_blocks(PredictiveModel& model,
                                     const ModelGradients& grads) {
  auto views = model.parameters();
  if (grads.weights.size() * 2 != views.size()) {
    throw ShapeError("gradient layer count does not match model");
  }
  std::vector<ParamBlock> blocks;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    const auto& gw = grads.weights[l];
    const auto& gb = grads.bias[l];
    blocks.push_back({views[2 * l].name, views[2 * l].values,
                      {gw.data(), static_cast<std::size_t>(gw.size())}});
    blocks.push_back({views[2 * l + 1].name, views[2 * l + 1].values,
                      {gb.data(), static_cast<std::size_t>(gb.size())}});
  }
  return blocks;
}

void optimizer_step(PredictiveModel& model, const ModelGradients& grads,
                    Adam& adam) {
  auto blocks = param_blocks(model, grads);
  adam.step(blocks);
  model.bump_revision();
}

}  // namespace lossattr
