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

#include "lossattr/commands.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lossattr/attribution.hpp"
#include "lossattr/dataset.hpp"
#include "lossattr/errors.hpp"
#include "lossattr/evaluation.hpp"
#include "lossattr/joint_train.hpp"
#include "lossattr/model_io.hpp"
#include "lossattr/synthetic.hpp"

namespace lossattr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void require_path(const fs::path& p, const std::string& flag) {
  if (p.empty()) throw InvalidArgument("missing required " + flag);
}

void prepare_out(const fs::path& out) {
  require_path(out, "--out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const RunConfig& config, const std::vector<std::string>& outputs,
                    json extra = json::object()) {
  json m;
  m["schema_version"] = kManifestSchemaVersion;
  m["model_schema_version"] = kModelSchemaVersion;
  m["config"] = config.to_json();
  m["outputs"] = outputs;
  for (auto& [key, value] : extra.items()) m[key] = value;
  m["created_at"] = utc_timestamp();
  write_json(config.out / "manifest.json", m);
}

ModelBundle load_with_estimator(const RunConfig& config) {
  require_path(config.model, "--model");
  auto bundle = load_model(config.model);
  if (!bundle.estimator) {
    throw InvalidArgument("model file '" + config.model.string() + "' has no loss estimator");
  }
  return bundle;
}

Dataset load_data(const RunConfig& config, const PredictiveModel* model) {
  require_path(config.data, "--data");
  Dataset data = read_csv(config.data, model ? model->num_classes() : 0);
  if (model && data.num_features() != model->input_dim()) {
    throw ShapeError("data has " + std::to_string(data.num_features()) +
                     " features, model expects " + std::to_string(model->input_dim()));
  }
  return data;
}

std::vector<int> resolve_samples(const RunConfig& config, const Dataset& data) {
  if (!config.samples) {
    std::vector<int> all(data.num_samples());
    for (int i = 0; i < data.num_samples(); ++i) all[i] = i;
    return all;
  }
  for (int id : *config.samples) {
    if (id < 0 || id >= data.num_samples()) {
      throw IndexError("sample id " + std::to_string(id) + " outside [0, " +
                       std::to_string(data.num_samples()) + ")");
    }
  }
  return *config.samples;
}

MaskingStrategy resolve_strategy(const RunConfig& config, const Dataset& data) {
  if (config.strategy.rfind("feature_mean", 0) == 0 && !config.reference.empty()) {
    Dataset reference = read_csv(config.reference);
    if (reference.num_features() != data.num_features()) {
      throw ShapeError("reference data has " + std::to_string(reference.num_features()) +
                       " features, expected " + std::to_string(data.num_features()));
    }
    return MaskingStrategy::parse(config.strategy, &reference);
  }
  return MaskingStrategy::parse(config.strategy, &data);
}

}  // namespace

void cmd_train(const RunConfig& config) {
  Dataset data = load_data(config, nullptr);
  config.train.validate();
  JointTrainConfig train = config.train;
  train.seed = config.seed;

  auto split = train_holdout_split(data, config.holdout_fraction, config.seed);
  auto model = PredictiveModel::create(data.num_features(), config.hidden_layers,
                                       data.num_classes, config.resolved_dropout_rate(),
                                       config.seed);
  auto estimator = config.taps.empty()
                       ? LossEstimator::create(model, config.estimator_units, config.seed)
                       : LossEstimator::create(model, config.taps, config.estimator_units,
                                               config.seed);
  auto result = joint_train(split.train, split.holdout, std::move(model),
                            std::move(estimator), train);

  prepare_out(config.out);
  save_model(result.model, &result.estimator, config.out / "model.bin");
  result.history.write_csv(config.out / "history.csv");
  write_json(config.out / "split.json",
             {{"holdout_fraction", config.holdout_fraction},
              {"train", split.train_indices},
              {"holdout", split.holdout_indices}});
  write_manifest(config, {"model.bin", "history.csv", "split.json"},
                 {{"num_samples", data.num_samples()},
                  {"num_features", data.num_features()},
                  {"num_classes", data.num_classes}});
}

void cmd_explain(const RunConfig& config) {
  auto bundle = load_with_estimator(config);
  Dataset data = load_data(config, &bundle.model);
  const auto ids = resolve_samples(config, data);
  const auto strategy = resolve_strategy(config, data);

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(ids.size()), data.num_features());
  for (std::size_t i = 0; i < ids.size(); ++i) rows.row(i) = data.features.row(ids[i]);
  auto results = ids.empty() ? std::vector<AttributionResult>{}
                             : explain_batch(bundle.model, *bundle.estimator, rows,
                                             strategy, ids, config.workers);

  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["strategy"] = strategy.id();
  doc["feature_names"] = data.feature_names;
  doc["results"] = json::array();
  for (const auto& r : results) doc["results"].push_back(to_json(r));

  prepare_out(config.out);
  write_json(config.out / "attributions.json", doc);
  write_attributions_csv(results, data.feature_names, strategy.id(),
                         config.out / "attributions.csv");
  write_manifest(config, {"attributions.json", "attributions.csv"},
                 {{"strategy_id", strategy.id()}});
}

void cmd_evaluate(const RunConfig& config) {
  auto bundle = load_with_estimator(config);
  Dataset data = load_data(config, &bundle.model);
  const auto ids = resolve_samples(config, data);
  if (ids.empty()) throw InvalidArgument("evaluate needs at least one sample");
  const auto strategy = resolve_strategy(config, data);
  if (config.explainers.empty()) throw InvalidArgument("no explainers requested");
  Dataset subset = data.subset(ids);

  const auto& model = bundle.model;
  std::vector<EvalReport> reports;
  for (const auto& name : config.explainers) {
    Explainer explainer;
    if (name == "profile") {
      explainer = loss_granger_explainer(model, *bundle.estimator, strategy);
    } else if (name == "random") {
      explainer = random_explainer(config.seed);
    } else if (name == "oracle") {
      explainer = [&](const Eigen::VectorXd& x, int i) {
        return oracle_granger_scores(model, x, subset.labels[i], strategy).ranking;
      };
    } else {
      throw InvalidArgument("unknown explainer '" + name +
                            "' (expected profile, random or oracle)");
    }
    auto report = evaluate_explainer(model, explainer, subset, config.k_percent, strategy,
                                     name, config.workers);
    for (auto& entry : report.per_sample) entry.first = ids[entry.first];
    reports.push_back(std::move(report));
  }

  json doc;
  doc["schema_version"] = kManifestSchemaVersion;
  doc["reports"] = json::array();
  for (const auto& r : reports) doc["reports"].push_back(r.to_json());

  prepare_out(config.out);
  std::vector<std::string> outputs{"report.json", "report.csv"};
  write_json(config.out / "report.json", doc);
  write_reports_csv(reports, config.out / "report.csv");
  if (config.plot_data) {
    write_plot_data_csv(reports, config.out / "plot_data.csv");
    outputs.push_back("plot_data.csv");
  }
  write_manifest(config, outputs, {{"strategy_id", strategy.id()}});
}

void cmd_synth_gen(const RunConfig& config) {
  int n = 5000;
  int classes = 4;
  if (config.synthetic.contains("n")) n = config.synthetic["n"].get<int>();
  if (config.synthetic.contains("num_classes")) {
    classes = config.synthetic["num_classes"].get<int>();
  }
  json merged = SyntheticShiftSpec::draw(config.seed, n, classes).to_json();
  merged["seed"] = config.seed;
  merged.update(config.synthetic);
  const auto spec = SyntheticShiftSpec::from_json(merged);
  auto triple = generate_triple(spec);

  json extra = json::object();
  if (config.standardize) {
    const auto s = Standardizer::fit(triple.original);
    for (Dataset* d : {&triple.original, &triple.corr_shifted, &triple.var_shifted}) {
      s.apply(*d);
    }
    extra["standardization"] = {
        {"fitted_on", "original.csv"},
        {"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
        {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
  }

  prepare_out(config.out);
  extra["dataset"] = write_triple(spec, triple, config.out);
  write_manifest(config, {"original.csv", "corr_shifted.csv", "var_shifted.csv"}, extra);
}

void cmd_severity_sweep(const RunConfig& config) {
  auto bundle = load_with_estimator(config);
  Dataset data = load_data(config, &bundle.model);
  const auto ids = resolve_samples(config, data);
  if (ids.empty()) throw InvalidArgument("severity sweep needs at least one sample");
  Dataset subset = data.subset(ids);
  auto curve = severity_sweep(bundle.model, *bundle.estimator, subset, config.noise_levels,
                              config.seed);

  std::string csv = "noise_std,mean_estimate\n";
  for (const auto& p : curve) {
    csv += format_real(p.noise_std) + "," + format_real(p.mean_estimate) + "\n";
  }
  prepare_out(config.out);
  write_text(config.out / "sweep.csv", csv);
  write_manifest(config, {"sweep.csv"});
}

namespace {

// Flag values as parsed; only flags actually given override the config.
struct Flags {
  std::string config, data, model, reference, out, strategy, samples, explainers,
      levels, hidden, objective, taps;
  std::uint64_t seed = 0;
  double k_percent = 0, lambda = 0, holdout = 0;
  int workers = 1, epochs = 0, n = 0, d = 0, classes = 0;
  bool plot_data = false, standardize = false;
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Loss-estimator feature attribution"};
  app.name(args.empty() ? "lossattr" : fs::path(args[0]).filename().string());
  app.require_subcommand(1);
  app.set_version_flag("--version", "lossattr 0.1.0");

  Flags f;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> overrides;
  auto add = [&](CLI::App* sub, CLI::Option* opt, std::function<void(RunConfig&)> apply) {
    (void)sub;
    overrides.emplace_back(opt, std::move(apply));
  };

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file; flags override its values");
    add(sub, sub->add_option("--seed", f.seed, "Top-level seed"),
        [&](RunConfig& c) { c.seed = f.seed; });
    add(sub, sub->add_option("--out", f.out, "Output directory"),
        [&](RunConfig& c) { c.out = f.out; });
  };
  auto inputs = [&](CLI::App* sub, bool with_model) {
    add(sub, sub->add_option("--data", f.data, "Dataset CSV (features + label)"),
        [&](RunConfig& c) { c.data = f.data; });
    if (with_model) {
      add(sub, sub->add_option("--model", f.model, "Model file from `train`"),
          [&](RunConfig& c) { c.model = f.model; });
    }
  };
  auto samples = [&](CLI::App* sub) {
    add(sub,
        sub->add_option("--samples", f.samples,
                        "Comma-separated row ids, 'all', or '' for none"),
        [&](RunConfig& c) {
          if (f.samples == "all") {
            c.samples.reset();
          } else {
            c.samples = parse_int_list(f.samples);
          }
        });
  };
  auto workers = [&](CLI::App* sub) {
    add(sub, sub->add_option("--workers", f.workers, "Threads for per-sample work"),
        [&](RunConfig& c) { c.workers = f.workers; });
  };
  auto strategy = [&](CLI::App* sub) {
    add(sub,
        sub->add_option("--strategy", f.strategy,
                        "zero | constant:<v> | feature_mean"),
        [&](RunConfig& c) { c.strategy = f.strategy; });
    add(sub,
        sub->add_option("--reference", f.reference,
                        "CSV supplying feature means (default: --data)"),
        [&](RunConfig& c) { c.reference = f.reference; });
  };

  auto* train = app.add_subcommand("train", "Jointly train classifier and loss estimator");
  common(train);
  inputs(train, false);
  add(train, train->add_option("--epochs", f.epochs),
      [&](RunConfig& c) { c.train.epochs = f.epochs; });
  add(train, train->add_option("--objective", f.objective, "contrastive | dropout_calibration"),
      [&](RunConfig& c) { c.train.objective = parse_objective(f.objective); });
  add(train, train->add_option("--hidden", f.hidden, "Comma-separated hidden widths"),
      [&](RunConfig& c) { c.hidden_layers = parse_int_list(f.hidden); });
  add(train, train->add_option("--taps", f.taps, "Comma-separated tapped hidden layers"),
      [&](RunConfig& c) { c.taps = parse_int_list(f.taps); });
  add(train, train->add_option("--lambda", f.lambda, "Auxiliary loss weight"),
      [&](RunConfig& c) { c.train.lambda_aux = f.lambda; });
  add(train, train->add_option("--holdout-fraction", f.holdout),
      [&](RunConfig& c) { c.holdout_fraction = f.holdout; });

  auto* explain = app.add_subcommand("explain", "Granger attributions from the loss estimator");
  common(explain);
  inputs(explain, true);
  samples(explain);
  strategy(explain);
  workers(explain);

  auto* evaluate = app.add_subcommand("evaluate", "Delta log-odds of explainer rankings");
  common(evaluate);
  inputs(evaluate, true);
  samples(evaluate);
  strategy(evaluate);
  workers(evaluate);
  add(evaluate, evaluate->add_option("--k-percent", f.k_percent, "Percent of features masked"),
      [&](RunConfig& c) { c.k_percent = f.k_percent; });
  add(evaluate,
      evaluate->add_option("--explainers", f.explainers, "Comma list of profile, random, oracle"),
      [&](RunConfig& c) { c.explainers = parse_string_list(f.explainers); });
  add(evaluate, evaluate->add_flag("--plot-data", f.plot_data, "Also write plot_data.csv"),
      [&](RunConfig& c) { c.plot_data = f.plot_data; });

  auto* synth = app.add_subcommand("synth-gen", "Generate a synthetic shift triple");
  common(synth);
  add(synth, synth->add_option("--n", f.n, "Samples per set"),
      [&](RunConfig& c) { c.synthetic["n"] = f.n; });
  add(synth, synth->add_option("--d", f.d, "Feature count"),
      [&](RunConfig& c) { c.synthetic["d"] = f.d; });
  add(synth, synth->add_option("--classes", f.classes, "Number of classes"),
      [&](RunConfig& c) { c.synthetic["num_classes"] = f.classes; });
  add(synth,
      synth->add_flag("--standardize", f.standardize,
                      "Scale all sets with the original set's mean and sd"),
      [&](RunConfig& c) { c.standardize = f.standardize; });

  auto* sweep = app.add_subcommand("severity-sweep", "Mean estimated loss under Gaussian noise");
  common(sweep);
  inputs(sweep, true);
  samples(sweep);
  add(sweep, sweep->add_option("--levels", f.levels, "Ascending noise std list, first 0"),
      [&](RunConfig& c) { c.noise_levels = parse_real_list(f.levels); });

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    RunConfig config;
    if (!f.config.empty()) config = load_config_file(f.config, config);
    config.command = active->get_name();
    for (auto& [opt, apply] : overrides) {
      if (opt->count() > 0 && active->get_option_no_throw(opt->get_name()) == opt) apply(config);
    }
    if (config.workers < 1) throw InvalidArgument("--workers must be at least 1");
    require_path(config.out, "--out");

    if (config.command == "train") cmd_train(config);
    else if (config.command == "explain") cmd_explain(config);
    else if (config.command == "evaluate") cmd_evaluate(config);
    else if (config.command == "synth-gen") cmd_synth_gen(config);
    else cmd_severity_sweep(config);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace lossattr::cli
