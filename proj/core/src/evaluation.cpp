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

#include "lossattr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>

#include "lossattr/errors.hpp"
#include "lossattr/rng.hpp"
#include "lossattr/stats.hpp"

namespace lossattr {

double log_odds(double p) {
  const double c = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(c / (1.0 - c));
}

int masked_count(double k_percent, int d) {
  if (!(k_percent >= 0.0 && k_percent <= 100.0)) {
    throw InvalidArgument("k_percent must lie in [0, 100]");
  }
  return static_cast<int>(std::ceil(k_percent * d / 100.0));
}

void check_permutation(std::span<const int> ranking, int d) {
  if (static_cast<int>(ranking.size()) != d) {
    throw RankingError("ranking has " + std::to_string(ranking.size()) +
                       " entries, expected " + std::to_string(d));
  }
  std::vector<bool> seen(d, false);
  for (int j : ranking) {
    if (j < 0 || j >= d || seen[j]) {
      throw RankingError("ranking is not a permutation of [0, " + std::to_string(d) + ")");
    }
    seen[j] = true;
  }
}

double delta_log_odds(const PredictiveModel& model,
                      const Eigen::Ref<const Eigen::VectorXd>& x,
                      std::span<const int> ranking, double k_percent,
                      const MaskingStrategy& strategy) {
  const int d = static_cast<int>(x.size());
  check_permutation(ranking, d);
  const int count = masked_count(k_percent, d);
  if (count == 0) return 0.0;

  Eigen::MatrixXd batch(d, 2);
  batch.col(0) = x;
  batch.col(1) = mask_features(x, ranking.first(count), strategy);
  auto trace = forward(model, batch);
  const Eigen::VectorXd p_ref_all = softmax(trace.logits.col(0));
  const int reference_class = argmax(p_ref_all);
  const double p_ref = p_ref_all(reference_class);
  const double p_masked = softmax(trace.logits.col(1))(reference_class);
  return log_odds(p_ref) - log_odds(p_masked);
}

std::vector<double> EvalReport::scores() const {
  std::vector<double> out;
  out.reserve(per_sample.size());
  for (const auto& [id, score] : per_sample) out.push_back(score);
  return out;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& [id, score] : per_sample) {
    samples.push_back({{"sample_id", id}, {"delta_log_odds", score}});
  }
  return {{"explainer", explainer_id}, {"strategy", strategy_id},
          {"k_percent", k_percent},    {"median", median},
          {"p25", p25},                {"p75", p75},
          {"per_sample", samples}};
}

void summarize(EvalReport& report) {
  auto s = report.scores();
  if (s.empty()) {
    report.median = report.p25 = report.p75 = 0.0;
    return;
  }
  report.median = percentile(s, 50.0);
  report.p25 = percentile(s, 25.0);
  report.p75 = percentile(s, 75.0);
}

EvalReport evaluate_explainer(const PredictiveModel& model,
                              const Explainer& explainer, const Dataset& data,
                              double k_percent, const MaskingStrategy& strategy,
                              const std::string& explainer_id, int workers) {
  const int n = data.num_samples();
  if (n == 0) throw InvalidArgument("evaluation dataset is empty");
  masked_count(k_percent, data.num_features());

  EvalReport report;
  report.explainer_id = explainer_id;
  report.strategy_id = strategy.id();
  report.k_percent = k_percent;
  report.per_sample.resize(n);

  auto run_one = [&](int i) {
    try {
      Eigen::VectorXd x = data.sample(i);
      auto ranking = explainer(x, i);
      report.per_sample[i] = {i, delta_log_odds(model, x, ranking, k_percent, strategy)};
    } catch (const UsageError& e) {
      throw UsageError("sample " + std::to_string(i) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("sample " + std::to_string(i) + ": " + e.what());
    }
  };

  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run_one(i);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<int> failed_at(workers, n);
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
        const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
        for (int i = begin; i < end; ++i) {
          try {
            run_one(i);
          } catch (...) {
            errors[w] = std::current_exception();
            failed_at[w] = i;
            return;
          }
        }
      });
    }
    for (auto& t : threads) t.join();
    int first = -1;
    for (int w = 0; w < workers; ++w) {
      if (errors[w] && (first < 0 || failed_at[w] < failed_at[first])) first = w;
    }
    if (first >= 0) std::rethrow_exception(errors[first]);
  }
  summarize(report);
  return report;
}

std::vector<int> random_ranking_baseline(int d, std::uint64_t seed) {
  if (d < 1) throw InvalidArgument("random ranking needs d >= 1");
  std::vector<int> ranking(d);
  std::iota(ranking.begin(), ranking.end(), 0);
  std::mt19937_64 engine(seed);
  std::shuffle(ranking.begin(), ranking.end(), engine);
  return ranking;
}

Explainer loss_granger_explainer(const PredictiveModel& model,
                                 const LossEstimator& estimator,
                                 const MaskingStrategy& strategy) {
  return [&model, &estimator, strategy](const Eigen::VectorXd& x, int index) {
    return granger_scores(model, estimator, x, strategy, index).ranking;
  };
}

Explainer random_explainer(std::uint64_t seed) {
  const std::uint64_t base = derive_seed(seed, Stream::kRandomBaseline);
  return [base](const Eigen::VectorXd& x, int index) {
    return random_ranking_baseline(static_cast<int>(x.size()),
                                   derive_seed(base, static_cast<std::uint64_t>(index)));
  };
}

std::vector<SeverityPoint> severity_sweep(const PredictiveModel& model,
                                          const LossEstimator& estimator,
                                          const Dataset& data,
                                          std::span<const double> noise_levels,
                                          std::uint64_t seed) {
  if (noise_levels.empty()) throw InvalidArgument("severity sweep needs at least one level");
  for (std::size_t i = 0; i < noise_levels.size(); ++i) {
    if (!(noise_levels[i] >= 0.0) || !std::isfinite(noise_levels[i])) {
      throw InvalidArgument("noise levels must be finite and non-negative");
    }
    if (i > 0 && noise_levels[i] < noise_levels[i - 1]) {
      throw InvalidArgument("noise levels must be sorted ascending");
    }
  }
  if (noise_levels.front() != 0.0) throw InvalidArgument("first noise level must be 0");
  if (data.num_samples() == 0) throw InvalidArgument("severity sweep on an empty dataset");

  // Column-major draw order: sample by sample, feature by feature.
  Eigen::MatrixXd clean = data.features.transpose();
  Eigen::MatrixXd noise(clean.rows(), clean.cols());
  Rng rng(derive_seed(seed, Stream::kNoise));
  for (Eigen::Index c = 0; c < noise.cols(); ++c) {
    for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = rng.normal();
  }

  std::vector<SeverityPoint> curve;
  for (double level : noise_levels) {
    Eigen::MatrixXd inputs = level == 0.0 ? clean : Eigen::MatrixXd(clean + level * noise);
    auto trace = forward(model, inputs);
    auto est = estimate_loss(estimator, trace);
    curve.push_back({level, est.mean()});
  }
  return curve;
}

void write_reports_csv(const std::vector<EvalReport>& reports,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "explainer,strategy,k_percent,n,median,p25,p75\n";
  for (const auto& r : reports) {
    out << r.explainer_id << ',' << r.strategy_id << ',' << format_real(r.k_percent)
        << ',' << r.per_sample.size() << ',' << format_real(r.median) << ','
        << format_real(r.p25) << ',' << format_real(r.p75) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_plot_data_csv(const std::vector<EvalReport>& reports,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "explainer,k,sample_id,score\n";
  for (const auto& r : reports) {
    for (const auto& [id, score] : r.per_sample) {
      out << r.explainer_id << ',' << format_real(r.k_percent) << ',' << id << ','
          << format_real(score) << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lossattr
