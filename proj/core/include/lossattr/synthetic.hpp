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

#ifndef LOSSATTR_SYNTHETIC_HPP_
#define LOSSATTR_SYNTHETIC_HPP_

#include <cstdint>
#include <filesystem>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lossattr/dataset.hpp"

namespace lossattr {

// Parameters of one synthetic covariate-shift realization. Samples come from
// N(alpha * 1, Sigma) with unit diagonal and constant off-diagonal beta; the
// shifted sets change the off-diagonal to beta + delta_beta, or the diagonal
// to 1 + kappa.
struct SyntheticShiftSpec {
  int d = 20;
  int n = 5000;
  double alpha = 0.0;
  double beta = 0.0;
  double delta_beta = 0.0;
  double kappa = 0.5;
  int num_classes = 4;
  std::uint64_t seed = 0;

  // Throws InvalidArgument when a field is outside its documented range:
  // d in [2, inf), n >= num_classes >= 1, kappa >= 0, finite reals.
  void validate() const;

  // Draws d from [10, 50], alpha from U[-2, 2], beta from U[-1, 1],
  // delta_beta from U[-0.2, 0.2] and kappa from U[0.25, 0.75] using
  // derive_seed(seed, kSpecDraw). n and num_classes are left as given.
  static SyntheticShiftSpec draw(std::uint64_t seed, int n = 5000,
                                 int num_classes = 4);

  nlohmann::json to_json() const;
  static SyntheticShiftSpec from_json(const nlohmann::json& j);
};

// min(max(beta, -1/(d-1) + 1e-3), 1 - 1e-3): keeps the equicorrelation
// matrix positive definite.
double clamp_correlation(double beta, int d);

// diag = variance, off-diagonal = correlation (entries, not scaled).
Eigen::MatrixXd equicorrelation(int d, double correlation, double variance);

// Mahalanobis distance of every row from `mean`, then equal-frequency
// binning into C classes (class 0 = closest). Ties broken by row index.
std::vector<int> quantile_label(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::MatrixXd>& covariance,
                                int num_classes);

struct SyntheticTriple {
  Dataset original;
  Dataset corr_shifted;
  Dataset var_shifted;
  // Post-clamp correlations actually used.
  double beta_original = 0.0;
  double beta_shifted = 0.0;
};

// Each set has its own sample stream derived from spec.seed, so the three are
// independent draws.
SyntheticTriple generate_triple(const SyntheticShiftSpec& spec);

// Writes original.csv, corr_shifted.csv, var_shifted.csv into `dir` and
// returns the manifest body (realized spec including clamped betas).
nlohmann::json write_triple(const SyntheticShiftSpec& spec,
                            const SyntheticTriple& triple,
                            const std::filesystem::path& dir);

}  // namespace lossattr

#endif  // LOSSATTR_SYNTHETIC_HPP_
