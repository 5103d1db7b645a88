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

#ifndef LOSSATTR_MODEL_IO_HPP_
#define LOSSATTR_MODEL_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lossattr/loss_estimator.hpp"
#include "lossattr/nn.hpp"

namespace lossattr {

inline constexpr std::uint32_t kModelSchemaVersion = 1;

struct ModelBundle {
  PredictiveModel model;
  std::optional<LossEstimator> estimator;
};

// Binary container; the byte layout is documented in docs/formats.md.
//   "LAMF" | u32 version | u64 header_len | header JSON | f64 blocks | u64 fnv1a
std::vector<std::uint8_t> serialize_model(const PredictiveModel& model,
                                          const LossEstimator* estimator);

// Throws UnsupportedVersionError or ParseError (with the byte offset of the
// problem). Never returns a partially filled bundle.
ModelBundle deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_model(const PredictiveModel& model, const LossEstimator* estimator,
                const std::filesystem::path& path);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace lossattr

#endif  // LOSSATTR_MODEL_IO_HPP_
