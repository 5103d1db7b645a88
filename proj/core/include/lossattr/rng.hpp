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

#ifndef LOSSATTR_RNG_HPP_
#define LOSSATTR_RNG_HPP_

#include <cstdint>
#include <random>

namespace lossattr {

// Named random streams. Every component derives its generator from the run's
// top-level seed and one of these ids, so adding draws to one component never
// perturbs another.
enum class Stream : std::uint64_t {
  kPredictorInit = 1,
  kEstimatorInit = 2,
  kShuffle = 3,
  kDropout = 4,
  kSplit = 5,
  kSynthetic = 6,
  kRandomBaseline = 7,
  kNoise = 8,
  kSpecDraw = 9,
};

std::uint64_t splitmix64(std::uint64_t x);

// derive_seed(s, id) = splitmix64(s ^ splitmix64(id)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream_id);
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

// mt19937_64 with the few draw primitives the library needs. uniform() uses
// the top 53 bits of one engine output, so the sequence is fully specified
// and can be replayed by anything holding a std::mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace lossattr

#endif  // LOSSATTR_RNG_HPP_
