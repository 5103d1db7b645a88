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

#ifndef LOSSATTR_DATASET_HPP_
#define LOSSATTR_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lossattr {

// N samples with d real features each and an integer class label in [0, C).
// Rows of `features` are samples.
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  int num_classes = 0;

  int num_samples() const { return static_cast<int>(features.rows()); }
  int num_features() const { return static_cast<int>(features.cols()); }

  Eigen::VectorXd sample(int i) const { return features.row(i).transpose(); }

  // Throws ShapeError / InvalidLabel / NumericError when an invariant fails:
  // finite entries, one label per row, labels within [0, num_classes), one
  // name per column.
  void validate() const;

  // Rows in the order given by `indices`.
  Dataset subset(std::span<const int> indices) const;

  // Per-feature arithmetic means.
  Eigen::VectorXd column_means() const;
};

// Default names f0..f{d-1}.
std::vector<std::string> default_feature_names(int d);

// Reads a CSV with a header row. One column must be named `label`; every other
// column is a feature, parsed as a decimal real. When `num_classes` is 0 it is
// inferred as max(label) + 1.
Dataset read_csv(const std::filesystem::path& path, int num_classes = 0);

// Writes feature columns followed by `label`. Reals use the shortest
// representation that round-trips.
void write_csv(const Dataset& data, const std::filesystem::path& path);

// Deterministic shuffled train/held-out split. `holdout_fraction` of the rows
// (rounded down, at least one when the fraction is positive) go to the second
// set.
struct Split {
  Dataset train;
  Dataset holdout;
  std::vector<int> train_indices;
  std::vector<int> holdout_indices;
};
Split train_holdout_split(const Dataset& data, double holdout_fraction,
                          std::uint64_t seed);

// Per-column affine map x -> (x - mean) / scale. Constant columns get
// scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Dataset& data);
  void apply(Dataset& data) const;
};

// Shortest round-trip decimal form of a double.
std::string format_real(double value);

}  // namespace lossattr

#endif  // LOSSATTR_DATASET_HPP_
