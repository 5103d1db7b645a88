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

#include "lossattr/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lossattr/errors.hpp"
#include "lossattr/rng.hpp"

namespace lossattr {

void SyntheticShiftSpec::validate() const {
  if (d < 2) throw InvalidArgument("synthetic spec needs d >= 2");
  if (num_classes < 1) throw InvalidArgument("synthetic spec needs num_classes >= 1");
  if (n < num_classes) throw InvalidArgument("synthetic spec needs n >= num_classes");
  for (double v : {alpha, beta, delta_beta, kappa}) {
    if (!std::isfinite(v)) throw InvalidArgument("synthetic spec has a non-finite field");
  }
  if (kappa < 0.0) throw InvalidArgument("kappa must be >= 0");
}

SyntheticShiftSpec SyntheticShiftSpec::draw(std::uint64_t seed, int n,
                                            int num_classes) {
  Rng rng(derive_seed(seed, Stream::kSpecDraw));
  SyntheticShiftSpec spec;
  spec.d = 10 + static_cast<int>(rng.uniform() * 41.0);
  spec.alpha = rng.uniform(-2.0, 2.0);
  spec.beta = rng.uniform(-1.0, 1.0);
  spec.delta_beta = rng.uniform(-0.2, 0.2);
  spec.kappa = rng.uniform(0.25, 0.75);
  spec.n = n;
  spec.num_classes = num_classes;
  spec.seed = seed;
  return spec;
}

nlohmann::json SyntheticShiftSpec::to_json() const {
  return {{"d", d},
          {"n", n},
          {"alpha", alpha},
          {"beta", beta},
          {"delta_beta", delta_beta},
          {"kappa", kappa},
          {"num_classes", num_classes},
          {"seed", seed}};
}

SyntheticShiftSpec SyntheticShiftSpec::from_json(const nlohmann::json& j) {
  SyntheticShiftSpec spec;
  spec.d = j.value("d", spec.d);
  spec.n = j.value("n", spec.n);
  spec.alpha = j.value("alpha", spec.alpha);
  spec.beta = j.value("beta", spec.beta);
  spec.delta_beta = j.value("delta_beta", spec.delta_beta);
  spec.kappa = j.value("kappa", spec.kappa);
  spec.num_classes = j.value("num_classes", spec.num_classes);
  spec.seed = j.value("seed", spec.seed);
  return spec;
}

double clamp_correlation(double beta, int d) {
  if (d < 2) throw InvalidArgument("clamp_correlation needs d >= 2");
  const double lower = -1.0 / (d - 1) + 1e-3;
  const double upper = 1.0 - 1e-3;
  return std::min(std::max(beta, lower), upper);
}

Eigen::MatrixXd equicorrelation(int d, double correlation, double variance) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(d, d, correlation);
  sigma.diagonal().setConstant(variance);
  return sigma;
}

std::vector<int> quantile_label(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::MatrixXd>& covariance,
                                int num_classes) {
  const int n = static_cast<int>(samples.rows());
  const int d = static_cast<int>(samples.cols());
  if (num_classes < 1) throw InvalidArgument("need at least one class");
  if (num_classes > n) throw InvalidArgument("more classes than samples");
  if (mean.size() != d || covariance.rows() != d || covariance.cols() != d) {
    throw ShapeError("mean/covariance shape does not match samples");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw InvalidArgument("covariance is not positive definite");
  }

  Eigen::MatrixXd centered = (samples.rowwise() - mean.transpose()).transpose();
  Eigen::MatrixXd whitened = llt.matrixL().solve(centered);
  std::vector<double> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = whitened.col(i).squaredNorm();

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] < dist[b]; });
  std::vector<int> labels(n);
  for (int rank = 0; rank < n; ++rank) {
    labels[order[rank]] = static_cast<int>(
        static_cast<long long>(rank) * num_classes / n);
  }
  return labels;
}

namespace {

Dataset sample_set(const SyntheticShiftSpec& spec, const Eigen::MatrixXd& sigma,
                   std::uint64_t seed) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericError("synthetic covariance is not positive definite");
  }
  const Eigen::MatrixXd factor = llt.matrixL();
  Rng rng(seed);
  Eigen::MatrixXd z(spec.d, spec.n);
  for (int i = 0; i < spec.n; ++i) {
    for (int j = 0; j < spec.d; ++j) z(j, i) = rng.normal();
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Constant(spec.d, spec.alpha);
  Eigen::MatrixXd x = factor * z;
  x.colwise() += mean;

  Dataset data;
  data.features = x.transpose();
  data.labels = quantile_label(data.features, mean, sigma, spec.num_classes);
  data.feature_names = default_feature_names(spec.d);
  data.num_classes = spec.num_classes;
  return data;
}

}  // namespace

SyntheticTriple generate_triple(const SyntheticShiftSpec& spec) {
  spec.validate();
  SyntheticTriple triple;
  triple.beta_original = clamp_correlation(spec.beta, spec.d);
  triple.beta_shifted = clamp_correlation(spec.beta + spec.delta_beta, spec.d);

  const std::uint64_t base = derive_seed(spec.seed, Stream::kSynthetic);
  triple.original = sample_set(spec, equicorrelation(spec.d, triple.beta_original, 1.0),
                               derive_seed(base, 0));
  triple.corr_shifted = sample_set(spec, equicorrelation(spec.d, triple.beta_shifted, 1.0),
                                   derive_seed(base, 1));
  triple.var_shifted = sample_set(
      spec, equicorrelation(spec.d, triple.beta_original, 1.0 + spec.kappa),
      derive_seed(base, 2));
  return triple;
}

nlohmann::json write_triple(const SyntheticShiftSpec& spec,
                            const SyntheticTriple& triple,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_csv(triple.original, dir / "original.csv");
  write_csv(triple.corr_shifted, dir / "corr_shifted.csv");
  write_csv(triple.var_shifted, dir / "var_shifted.csv");
  auto manifest = spec.to_json();
  manifest["beta_clamped"] = triple.beta_original;
  manifest["beta_shifted_clamped"] = triple.beta_shifted;
  manifest["files"] = {"original.csv", "corr_shifted.csv", "var_shifted.csv"};
  return manifest;
}

}  // namespace lossattr
