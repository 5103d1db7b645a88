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

#include "lossattr/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lossattr/errors.hpp"

namespace lossattr::cli {

namespace {

using nlohmann::json;

template <typename T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument("config key '" + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      throw InvalidArgument("unknown config key '" + where + key + "'");
    }
  }
}

void apply_train(JointTrainConfig& t, const json& j) {
  if (!j.is_object()) throw InvalidArgument("config key 'train' must be an object");
  reject_unknown(j,
                 {"objective", "gamma", "xi", "lambda_aux", "mc_passes",
                  "learning_rate", "batch_size", "epochs", "indicator",
                  "contrastive_dropout"},
                 "train.");
  if (j.contains("objective")) {
    t.objective = parse_objective(get_as<std::string>(j["objective"], "train.objective"));
  }
  if (j.contains("gamma")) t.gamma = get_as<double>(j["gamma"], "train.gamma");
  if (j.contains("xi")) t.xi = get_as<double>(j["xi"], "train.xi");
  if (j.contains("lambda_aux")) t.lambda_aux = get_as<double>(j["lambda_aux"], "train.lambda_aux");
  if (j.contains("mc_passes")) t.mc_passes = get_as<int>(j["mc_passes"], "train.mc_passes");
  if (j.contains("learning_rate")) {
    t.learning_rate = get_as<double>(j["learning_rate"], "train.learning_rate");
  }
  if (j.contains("batch_size")) t.batch_size = get_as<int>(j["batch_size"], "train.batch_size");
  if (j.contains("epochs")) t.epochs = get_as<int>(j["epochs"], "train.epochs");
  if (j.contains("indicator")) {
    t.indicator = parse_pair_indicator(get_as<std::string>(j["indicator"], "train.indicator"));
  }
  if (j.contains("contrastive_dropout")) {
    t.contrastive_dropout = get_as<bool>(j["contrastive_dropout"], "train.contrastive_dropout");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

double RunConfig::resolved_dropout_rate() const {
  if (dropout_rate) return *dropout_rate;
  return train.objective == Objective::kDropoutCalibration ? 0.1 : 0.0;
}

nlohmann::json RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["data"] = data.generic_string();
  j["model"] = model.generic_string();
  j["reference"] = reference.generic_string();
  j["out"] = out.generic_string();
  j["seed"] = seed;
  j["train"] = {
      {"objective", objective_name(train.objective)},
      {"gamma", train.gamma},
      {"xi", train.xi},
      {"lambda_aux", train.lambda_aux},
      {"mc_passes", train.mc_passes},
      {"learning_rate", train.learning_rate},
      {"batch_size", train.batch_size},
      {"epochs", train.epochs},
      {"indicator", pair_indicator_name(train.indicator)},
      {"contrastive_dropout", train.contrastive_dropout},
  };
  j["dropout_rate"] = resolved_dropout_rate();
  j["taps"] = taps;
  j["hidden_layers"] = hidden_layers;
  j["estimator_units"] = estimator_units;
  j["holdout_fraction"] = holdout_fraction;
  j["k_percent"] = k_percent;
  j["strategy"] = strategy;
  j["explainers"] = explainers;
  j["plot_data"] = plot_data;
  j["samples"] = samples ? json(*samples) : json(nullptr);
  j["noise_levels"] = noise_levels;
  j["synthetic"] = synthetic;
  j["standardize"] = standardize;
  j["workers"] = workers;
  return j;
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  reject_unknown(j,
                 {"command", "data", "model", "reference", "out", "seed", "train",
                  "dropout_rate", "taps", "hidden_layers", "estimator_units",
                  "holdout_fraction", "k_percent", "strategy", "explainers",
                  "plot_data", "samples", "noise_levels", "synthetic",
                  "standardize", "workers"},
                 "");
  // "command" is accepted so a manifest can be fed back as a config; the
  // subcommand on the command line decides what runs.
  if (j.contains("data")) c.data = get_as<std::string>(j["data"], "data");
  if (j.contains("model")) c.model = get_as<std::string>(j["model"], "model");
  if (j.contains("reference")) c.reference = get_as<std::string>(j["reference"], "reference");
  if (j.contains("out")) c.out = get_as<std::string>(j["out"], "out");
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j["seed"], "seed");
  if (j.contains("train")) apply_train(c.train, j["train"]);
  if (j.contains("dropout_rate")) {
    if (j["dropout_rate"].is_null()) {
      c.dropout_rate.reset();
    } else {
      c.dropout_rate = get_as<double>(j["dropout_rate"], "dropout_rate");
    }
  }
  if (j.contains("taps")) c.taps = get_as<std::vector<int>>(j["taps"], "taps");
  if (j.contains("hidden_layers")) {
    c.hidden_layers = get_as<std::vector<int>>(j["hidden_layers"], "hidden_layers");
  }
  if (j.contains("estimator_units")) {
    c.estimator_units = get_as<int>(j["estimator_units"], "estimator_units");
  }
  if (j.contains("holdout_fraction")) {
    c.holdout_fraction = get_as<double>(j["holdout_fraction"], "holdout_fraction");
  }
  if (j.contains("k_percent")) c.k_percent = get_as<double>(j["k_percent"], "k_percent");
  if (j.contains("strategy")) c.strategy = get_as<std::string>(j["strategy"], "strategy");
  if (j.contains("explainers")) {
    c.explainers = get_as<std::vector<std::string>>(j["explainers"], "explainers");
  }
  if (j.contains("plot_data")) c.plot_data = get_as<bool>(j["plot_data"], "plot_data");
  if (j.contains("samples")) {
    if (j["samples"].is_null()) {
      c.samples.reset();
    } else {
      c.samples = get_as<std::vector<int>>(j["samples"], "samples");
    }
  }
  if (j.contains("noise_levels")) {
    c.noise_levels = get_as<std::vector<double>>(j["noise_levels"], "noise_levels");
  }
  if (j.contains("synthetic")) {
    if (!j["synthetic"].is_object()) {
      throw InvalidArgument("config key 'synthetic' must be an object");
    }
    c.synthetic = j["synthetic"];
  }
  if (j.contains("standardize")) c.standardize = get_as<bool>(j["standardize"], "standardize");
  if (j.contains("workers")) c.workers = get_as<int>(j["workers"], "workers");
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config file '" + path.string() + "': " + e.what(), e.byte);
  }
  apply_json(base, j);
  return base;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw InvalidArgument("empty element in list '" + text + "'");
    out.push_back(item);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& item : parse_string_list(text)) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InvalidArgument("not an integer: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : parse_string_list(text)) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw InvalidArgument("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace lossattr::cli
