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

#ifndef LOSSATTR_STATS_HPP_
#define LOSSATTR_STATS_HPP_

#include <span>
#include <vector>

namespace lossattr {

// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson correlation of the average ranks. Returns 0 when either side is
// constant, since the coefficient is undefined there.
double spearman(std::span<const double> a, std::span<const double> b);

// Percentile in [0, 100] by linear interpolation between order statistics
// (position q/100 * (n - 1) in the sorted sample).
double percentile(std::span<const double> values, double q);

double mean(std::span<const double> values);

// Population standard deviation.
double stddev(std::span<const double> values);

}  // namespace lossattr

#endif  // LOSSATTR_STATS_HPP_
