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

#ifndef LOSSATTR_EVALUATION_HPP_
#define LOSSATTR_EVALUATION_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lossattr/attribution.hpp"
#include "lossattr/dataset.hpp"
#include "lossattr/loss_estimator.hpp"
#include "lossattr/nn.hpp"

namespace lossattr {

inline constexpr double kProbabilityClamp = 1e-7;

// log(p / (1 - p)) with p clamped to [1e-7, 1 - 1e-7].
double log_odds(double p);

// Number of features masked at k percent of d: ceil(k * d / 100).
int masked_count(double k_percent, int d);

// Throws RankingError unless `ranking` is a permutation of [0, d).
void check_permutation(std::span<const int> ranking, int d);

// log-odds(p_ref) - log-odds(p_masked) for the class predicted on the
// unmasked x, after masking the top ceil(k d / 100) ranked features.
double delta_log_odds(const PredictiveModel& model,
                      const Eigen::Ref<const Eigen::VectorXd>& x,
                      std::span<const int> ranking, double k_percent,
                      const MaskingStrategy& strategy);

// Produces a ranking for sample `index` of the evaluated dataset.
using Explainer =
    std::function<std::vector<int>(const Eigen::VectorXd& x, int index)>;

struct EvalReport {
  std::string explainer_id;
  std::string strategy_id;
  double k_percent = 0.0;
  std::vector<std::pair<int, double>> per_sample;  // (sample_id, score)
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;

  std::vector<double> scores() const;
  nlohmann::json to_json() const;
};

// Percentiles filled from `per_sample`.
void summarize(EvalReport& report);

EvalReport evaluate_explainer(const PredictiveModel& model,
                              const Explainer& explainer,
                              const Dataset& data, double k_percent,
                              const MaskingStrategy& strategy,
                              const std::string& explainer_id,
                              int workers = 1);

// Uniform random permutation of [0, d) (Fisher-Yates via std::shuffle on an
// mt19937_64 seeded with `seed`).
std::vector<int> random_ranking_baseline(int d, std::uint64_t seed);

// Ranking from the loss estimator's Granger deltas.
Explainer loss_granger_explainer(const PredictiveModel& model,
                                 const LossEstimator& estimator,
                                 const MaskingStrategy& strategy);

// Independent random permutation per sample index, seeded from
// derive_seed(seed, kRandomBaseline) and the index.
Explainer random_explainer(std::uint64_t seed);

struct SeverityPoint {
  double noise_std = 0.0;
  double mean_estimate = 0.0;
};

// Mean estimated loss after adding N(0, s^2) noise at every level s. One
// standard-normal draw per feature entry is shared across levels, so level s
// sees x + s * z. Levels must be ascending, non-negative, and start at 0.
std::vector<SeverityPoint> severity_sweep(const PredictiveModel& model,
                                          const LossEstimator& estimator,
                                          const Dataset& data,
                                          std::span<const double> noise_levels,
                                          std::uint64_t seed);

// Summary header: explainer,strategy,k_percent,n,median,p25,p75
void write_reports_csv(const std::vector<EvalReport>& reports,
                       const std::filesystem::path& path);

// Long format: explainer,k,sample_id,score
void write_plot_data_csv(const std::vector<EvalReport>& reports,
                         const std::filesystem::path& path);

}  // namespace lossattr

#endif  // LOSSATTR_EVALUATION_HPP_
