/*
 * Copyright 2026 The MVOL Authors.
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

// Seeded random streams.
//
// Every random draw in the library comes from an `Rng`. Streams are derived
// from a root seed plus a name (and optionally an index), e.g.
// `Rng::derive(seed, "gen/id", 17)`, so that adding a new consumer of
// randomness never perturbs the draws of an existing one and per-sample
// streams do not depend on thread scheduling.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The standard <random> distributions are not (their algorithms are
// implementation-defined), so uniform/normal/integer draws are implemented
// here on top of the raw 64-bit output.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace mvol {

// FNV-1a over raw bytes. Used for stream naming and artifact checksums.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(std::string_view text,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// SplitMix64 finalizer; decorrelates nearby seeds.
std::uint64_t mix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name);
  static std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                   std::uint64_t index);
  static Rng derive(std::uint64_t root, std::string_view name) {
    return Rng(derive_seed(root, name));
  }
  static Rng derive(std::uint64_t root, std::string_view name,
                    std::uint64_t index) {
    return Rng(derive_seed(root, name, index));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform on [lo, hi]; returns lo when lo == hi.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal (Box-Muller, one value per call).
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  // Uniform draw of `count` distinct values from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t count);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mvol
