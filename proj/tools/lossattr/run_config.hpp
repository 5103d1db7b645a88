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

#ifndef LOSSATTR_TOOLS_RUN_CONFIG_HPP_
#define LOSSATTR_TOOLS_RUN_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lossattr/joint_train.hpp"
#include "lossattr/synthetic.hpp"

namespace lossattr::cli {

// Every knob a command can read. Values come from the defaults below, then
// the --config JSON file, then command-line flags; the resolved result is
// echoed into each run's manifest.
struct RunConfig {
  std::string command;
  std::filesystem::path data;
  std::filesystem::path model;
  std::filesystem::path reference;
  std::filesystem::path out;

  JointTrainConfig train;
  // Classifier dropout; unset means 0.1 for dropout calibration, 0 otherwise.
  std::optional<double> dropout_rate;
  // Tapped hidden layers; empty means all.
  std::vector<int> taps;
  std::vector<int> hidden_layers{64, 64, 64, 64};
  int estimator_units = 16;
  double holdout_fraction = 0.1;

  double k_percent = 15.0;
  std::string strategy = "zero";
  std::vector<std::string> explainers{"profile", "random"};
  bool plot_data = false;
  // Unset: every row of the data file.
  std::optional<std::vector<int>> samples;
  std::vector<double> noise_levels{0.0, 0.5, 1.0, 2.0, 4.0};

  // synth-gen: explicit spec fields override values drawn from the seed.
  nlohmann::json synthetic = nlohmann::json::object();
  bool standardize = false;

  int workers = 1;
  std::uint64_t seed = 0;

  double resolved_dropout_rate() const;
  // Flattened view of every field, defaults expanded.
  nlohmann::json to_json() const;
};

// Applies keys present in `j` on top of `config`. Unknown keys are rejected.
void apply_json(RunConfig& config, const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

std::vector<int> parse_int_list(const std::string& text);
std::vector<double> parse_real_list(const std::string& text);
std::vector<std::string> parse_string_list(const std::string& text);

}  // namespace lossattr::cli

#endif  // LOSSATTR_TOOLS_RUN_CONFIG_HPP_
