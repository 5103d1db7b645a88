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

#include "lossattr/attribution.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <thread>

#include "lossattr/errors.hpp"

namespace lossattr {

MaskingStrategy MaskingStrategy::zero() { return MaskingStrategy(); }

MaskingStrategy MaskingStrategy::constant(double value) {
  if (!std::isfinite(value)) throw InvalidArgument("masking constant must be finite");
  MaskingStrategy s;
  s.kind_ = Kind::kConstant;
  s.constant_ = value;
  return s;
}

MaskingStrategy MaskingStrategy::feature_mean(Eigen::VectorXd means) {
  if (means.size() == 0) throw InvalidArgument("feature_mean masking needs means");
  if (!means.allFinite()) throw InvalidArgument("feature means must be finite");
  MaskingStrategy s;
  s.kind_ = Kind::kFeatureMean;
  s.means_ = std::move(means);
  return s;
}

MaskingStrategy MaskingStrategy::feature_mean(const Dataset& reference) {
  return feature_mean(reference.column_means());
}

MaskingStrategy MaskingStrategy::parse(const std::string& text,
                                       const Dataset* reference) {
  if (text == "zero") return zero();
  if (text == "feature_mean") {
    if (reference == nullptr) {
      throw InvalidArgument("feature_mean masking needs a reference dataset");
    }
    return feature_mean(*reference);
  }
  const std::string prefix = "constant:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string number = text.substr(prefix.size());
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), v);
    if (ec != std::errc() || ptr != number.data() + number.size() || number.empty()) {
      throw InvalidArgument("bad masking constant: " + number);
    }
    return constant(v);
  }
  throw InvalidArgument("unknown masking strategy: " + text +
                        " (expected zero, constant:<value>, feature_mean)");
}

double MaskingStrategy::replacement(int j, int d) const {
  switch (kind_) {
    case Kind::kZero:
      return 0.0;
    case Kind::kConstant:
      return constant_;
    case Kind::kFeatureMean:
      if (means_.size() != d) {
        throw ShapeError("feature_mean masking has " + std::to_string(means_.size()) +
                         " means, sample has " + std::to_string(d) + " features");
      }
      return means_(j);
  }
  return 0.0;
}

std::string MaskingStrategy::id() const {
  switch (kind_) {
    case Kind::kZero:
      return "zero";
    case Kind::kConstant:
      return "constant:" + format_real(constant_);
    case Kind::kFeatureMean:
      return "feature_mean";
  }
  return "zero";
}

Eigen::VectorXd mask_feature(const Eigen::Ref<const Eigen::VectorXd>& x, int j,
                             const MaskingStrategy& strategy) {
  const int d = static_cast<int>(x.size());
  if (j < 0 || j >= d) {
    throw IndexError("feature index " + std::to_string(j) + " outside [0, " +
                     std::to_string(d) + ")");
  }
  Eigen::VectorXd out = x;
  out(j) = strategy.replacement(j, d);
  return out;
}

Eigen::VectorXd mask_features(const Eigen::Ref<const Eigen::VectorXd>& x,
                              std::span<const int> features,
                              const MaskingStrategy& strategy) {
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd out = x;
  for (int j : features) {
    if (j < 0 || j >= d) {
      throw IndexError("feature index " + std::to_string(j) + " outside [0, " +
                       std::to_string(d) + ")");
    }
    out(j) = strategy.replacement(j, d);
  }
  return out;
}

std::vector<int> rank_by_score(std::span<const double> scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

namespace {

// Column 0 is x; column j + 1 is x with feature j masked.
Eigen::MatrixXd masked_batch(const Eigen::Ref<const Eigen::VectorXd>& x,
                             const MaskingStrategy& strategy) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd batch(d, d + 1);
  batch.col(0) = x;
  for (int j = 0; j < d; ++j) {
    batch.col(j + 1) = x;
    batch(j, j + 1) = strategy.replacement(j, d);
  }
  return batch;
}

AttributionResult assemble(int sample_id, const Eigen::Ref<const Eigen::RowVectorXd>& errors) {
  AttributionResult r;
  r.sample_id = sample_id;
  r.base_estimate = errors(0);
  const int d = static_cast<int>(errors.size()) - 1;
  r.masked_estimates.resize(d);
  r.deltas.resize(d);
  for (int j = 0; j < d; ++j) {
    r.masked_estimates[j] = errors(j + 1);
    r.deltas[j] = r.masked_estimates[j] - r.base_estimate;
  }
  r.ranking = rank_by_score(r.deltas);
  return r;
}

}  // namespace

AttributionResult granger_scores(const PredictiveModel& model,
                                 const LossEstimator& estimator,
                                 const Eigen::Ref<const Eigen::VectorXd>& x,
                                 const MaskingStrategy& strategy,
                                 int sample_id) {
  auto trace = forward(model, masked_batch(x, strategy));
  return assemble(sample_id, estimate_loss(estimator, trace));
}

AttributionResult oracle_granger_scores(const PredictiveModel& model,
                                        const Eigen::Ref<const Eigen::VectorXd>& x,
                                        int label,
                                        const MaskingStrategy& strategy,
                                        int sample_id) {
  auto trace = forward(model, masked_batch(x, strategy));
  Eigen::RowVectorXd losses(trace.batch_size());
  for (int c = 0; c < trace.batch_size(); ++c) {
    losses(c) = cross_entropy(trace.logits.col(c), label);
  }
  return assemble(sample_id, losses);
}

std::vector<AttributionResult> explain_batch(const PredictiveModel& model,
                                             const LossEstimator& estimator,
                                             const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                             const MaskingStrategy& strategy,
                                             std::span<const int> sample_ids,
                                             int workers) {
  const int n = static_cast<int>(samples.rows());
  if (!sample_ids.empty() && static_cast<int>(sample_ids.size()) != n) {
    throw ShapeError("sample id count does not match sample count");
  }
  std::vector<AttributionResult> results(n);
  auto run_one = [&](int i) {
    const int id = sample_ids.empty() ? i : sample_ids[i];
    try {
      results[i] = granger_scores(model, estimator, samples.row(i).transpose(), strategy, id);
    } catch (const UsageError& e) {
      throw UsageError("sample " + std::to_string(i) + ": " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("sample " + std::to_string(i) + ": " + e.what());
    }
  };

  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) run_one(i);
    return results;
  }

  // Static contiguous partition; each worker records its first failure and
  // the lowest failing index wins.
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
  return results;
}

nlohmann::json to_json(const AttributionResult& result) {
  return {{"sample_id", result.sample_id},
          {"base_estimate", result.base_estimate},
          {"deltas", result.deltas},
          {"ranking", result.ranking}};
}

void write_attributions_csv(const std::vector<AttributionResult>& results,
                            std::span<const std::string> feature_names,
                            const std::string& strategy_id,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,strategy,feature,feature_name,delta,rank\n";
  for (const auto& r : results) {
    std::vector<int> rank_of(r.deltas.size());
    for (std::size_t pos = 0; pos < r.ranking.size(); ++pos) rank_of[r.ranking[pos]] = static_cast<int>(pos);
    for (std::size_t j = 0; j < r.deltas.size(); ++j) {
      const std::string name = j < feature_names.size() ? feature_names[j] : "f" + std::to_string(j);
      out << r.sample_id << ',' << strategy_id << ',' << j << ',' << name << ','
          << format_real(r.deltas[j]) << ',' << rank_of[j] << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace lossattr
