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

#ifndef LOSSATTR_ATTRIBUTION_HPP_
#define LOSSATTR_ATTRIBUTION_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lossattr/dataset.hpp"
#include "lossattr/loss_estimator.hpp"
#include "lossattr/nn.hpp"

namespace lossattr {

// How a feature is removed from a sample: replaced by zero, by a constant,
// or by its mean over a reference dataset.
class MaskingStrategy {
 public:
  enum class Kind { kZero, kConstant, kFeatureMean };

  static MaskingStrategy zero();
  static MaskingStrategy constant(double value);
  // Throws InvalidArgument on empty or non-finite means.
  static MaskingStrategy feature_mean(Eigen::VectorXd means);
  static MaskingStrategy feature_mean(const Dataset& reference);

  // "zero", "constant:<value>"; "feature_mean" requires `reference`.
  static MaskingStrategy parse(const std::string& text,
                               const Dataset* reference = nullptr);

  Kind kind() const { return kind_; }
  double constant_value() const { return constant_; }
  const Eigen::VectorXd& means() const { return means_; }

  // Value that replaces feature j in a d-dimensional sample.
  double replacement(int j, int d) const;

  // "zero", "constant:<v>", "feature_mean".
  std::string id() const;

 private:
  Kind kind_ = Kind::kZero;
  double constant_ = 0.0;
  Eigen::VectorXd means_;
};

// Copy of x with feature j replaced. Throws IndexError when j is out of range.
Eigen::VectorXd mask_feature(const Eigen::Ref<const Eigen::VectorXd>& x, int j,
                             const MaskingStrategy& strategy);

// Copy of x with every listed feature replaced.
Eigen::VectorXd mask_features(const Eigen::Ref<const Eigen::VectorXd>& x,
                              std::span<const int> features,
                              const MaskingStrategy& strategy);

struct AttributionResult {
  int sample_id = 0;
  double base_estimate = 0.0;
  std::vector<double> masked_estimates;
  std::vector<double> deltas;  // masked_estimates[j] - base_estimate
  std::vector<int> ranking;    // by delta descending, ties by feature index
};

// Feature indices ordered by score descending, ties by ascending index.
std::vector<int> rank_by_score(std::span<const double> scores);

// Granger-style importance: the change in the estimator's loss prediction
// when each feature is masked. One batched forward over x and its d single-
// feature maskings, dropout off.
AttributionResult granger_scores(const PredictiveModel& model,
                                 const LossEstimator& estimator,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const MaskingStrategy& strategy,
                                 int sample_id = 0);

// Same pipeline with the true cross-entropy against `label`.
AttributionResult oracle_granger_scores(const PredictiveModel& model,
                                        const Eigen::Ref<const Eigen::VectorXd>& x,
                                        int label,
                                        const MaskingStrategy& strategy,
                                        int sample_id = 0);

// granger_scores over the rows of `samples`, order preserved. `sample_ids`
// (if non-empty) labels each row. With workers > 1 rows are split across
// threads; results are identical to the serial run. A failing row is
// re-thrown with its index.
std::vector<AttributionResult> explain_batch(const PredictiveModel& model,
                                             const LossEstimator& estimator,
                                             const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                             const MaskingStrategy& strategy,
                                             std::span<const int> sample_ids = {},
                                             int workers = 1);

// {sample_id, base_estimate, deltas[], ranking[]}
nlohmann::json to_json(const AttributionResult& result);

// One row per (sample, feature):
// sample_id,feature,feature_name,delta,rank
void write_attributions_csv(const std::vector<AttributionResult>& results,
                            std::span<const std::string> feature_names,
                            const std::string& strategy_id,
                            const std::filesystem::path& path);

}  // namespace lossattr

#endif  // LOSSATTR_ATTRIBUTION_HPP_
