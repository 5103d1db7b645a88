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

#include "lossattr/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lossattr/errors.hpp"
#include "lossattr/rng.hpp"

namespace lossattr {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    auto begin = field.find_first_not_of(" \t\r");
    auto end = field.find_last_not_of(" \t\r");
    out.push_back(begin == std::string::npos
                      ? std::string()
                      : field.substr(begin, end - begin + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& text, int line_no, int column) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw UsageError("csv line " + std::to_string(line_no) + ", column " +
                     std::to_string(column + 1) + ": not a decimal real: '" +
                     text + "'");
  }
  return value;
}

}  // namespace

void Dataset::validate() const {
  if (labels.size() != static_cast<std::size_t>(features.rows())) {
    throw ShapeError("dataset has " + std::to_string(features.rows()) +
                     " rows but " + std::to_string(labels.size()) + " labels");
  }
  if (feature_names.size() != static_cast<std::size_t>(features.cols())) {
    throw ShapeError("dataset has " + std::to_string(features.cols()) +
                     " features but " + std::to_string(feature_names.size()) +
                     " names");
  }
  if (num_classes < 1) throw InvalidArgument("dataset needs num_classes >= 1");
  if (!features.allFinite()) {
    throw InvalidArgument("dataset features contain NaN or Inf");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidLabel("label " + std::to_string(labels[i]) + " at row " +
                         std::to_string(i) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const int> indices) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    int i = indices[r];
    if (i < 0 || i >= num_samples()) {
      throw IndexError("row index " + std::to_string(i) + " out of range");
    }
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(i);
    out.labels.push_back(labels[i]);
  }
  out.feature_names = feature_names;
  out.num_classes = num_classes;
  return out;
}

Eigen::VectorXd Dataset::column_means() const {
  if (features.rows() == 0) {
    throw InvalidArgument("column means of an empty dataset");
  }
  Eigen::VectorXd means(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < features.rows(); ++i) sum += features(i, j);
    means(j) = sum / static_cast<double>(features.rows());
  }
  return means;
}

Standardizer Standardizer::fit(const Dataset& data) {
  Standardizer s;
  s.mean = data.column_means();
  s.scale.resize(data.features.cols());
  const double n = static_cast<double>(data.features.rows());
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
    double ss = 0.0;
    for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
      const double c = data.features(i, j) - s.mean(j);
      ss += c * c;
    }
    const double sd = std::sqrt(ss / n);
    s.scale(j) = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

void Standardizer::apply(Dataset& data) const {
  if (data.features.cols() != mean.size()) {
    throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                     " features, data has " +
                     std::to_string(data.features.cols()));
  }
  for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
    data.features.col(j) = (data.features.col(j).array() - mean(j)) / scale(j);
  }
}

std::vector<std::string> default_feature_names(int d) {
  std::vector<std::string> names;
  names.reserve(d);
  for (int j = 0; j < d; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

Dataset read_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file: " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw UsageError("empty csv: " + path.string());
  auto header = split_line(line);
  auto label_it = std::find(header.begin(), header.end(), "label");
  if (label_it == header.end()) {
    throw UsageError("csv header has no 'label' column: " + path.string());
  }
  const int label_col = static_cast<int>(label_it - header.begin());
  const int d = static_cast<int>(header.size()) - 1;

  Dataset data;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    if (c != label_col) data.feature_names.push_back(header[c]);
  }

  std::vector<double> values;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = split_line(line);
    if (fields.size() != header.size()) {
      throw ShapeError("csv line " + std::to_string(line_no) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    for (int c = 0; c < static_cast<int>(fields.size()); ++c) {
      double v = parse_real(fields[c], line_no, c);
      if (c == label_col) {
        if (v != std::floor(v) || v < 0) {
          throw InvalidLabel("csv line " + std::to_string(line_no) +
                             ": label must be a non-negative integer");
        }
        data.labels.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(data.labels.size());
  data.features.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = values[i * d + j];
  }
  if (num_classes > 0) {
    data.num_classes = num_classes;
  } else {
    int max_label = -1;
    for (int y : data.labels) max_label = std::max(max_label, y);
    data.num_classes = max_label + 1;
  }
  if (n == 0 && data.num_classes == 0) data.num_classes = 1;
  data.validate();
  return data;
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& name : data.feature_names) out << name << ',';
  out << "label\n";
  for (int i = 0; i < data.num_samples(); ++i) {
    for (int j = 0; j < data.num_features(); ++j) {
      out << format_real(data.features(i, j)) << ',';
    }
    out << data.labels[i] << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Split train_holdout_split(const Dataset& data, double holdout_fraction,
                          std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("holdout fraction must lie in [0, 1)");
  }
  const int n = data.num_samples();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, Stream::kSplit));
  std::shuffle(order.begin(), order.end(), rng.engine());

  int n_holdout = static_cast<int>(std::floor(holdout_fraction * n));
  if (holdout_fraction > 0.0 && n_holdout == 0 && n > 1) n_holdout = 1;

  Split split;
  split.holdout_indices.assign(order.begin(), order.begin() + n_holdout);
  split.train_indices.assign(order.begin() + n_holdout, order.end());
  std::sort(split.holdout_indices.begin(), split.holdout_indices.end());
  std::sort(split.train_indices.begin(), split.train_indices.end());
  split.train = data.subset(split.train_indices);
  split.holdout = data.subset(split.holdout_indices);
  return split;
}

}  // namespace lossattr
