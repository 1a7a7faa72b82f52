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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "mvol/rng.hpp"

using namespace mvol;

TEST_CASE("fnv1a64 matches the published FNV-1a test vectors") {
  CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64(std::string_view("foobar")) == 0x85944171f73967e8ULL);
}

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams depend on name and index only") {
  CHECK(Rng::derive_seed(7, "gen/id") == Rng::derive_seed(7, "gen/id"));
  CHECK(Rng::derive_seed(7, "gen/id") != Rng::derive_seed(7, "gen/ood"));
  CHECK(Rng::derive_seed(7, "gen/id", 0) != Rng::derive_seed(7, "gen/id", 1));
  CHECK(Rng::derive_seed(7, "gen/id", 3) != Rng::derive_seed(8, "gen/id", 3));
  // Nearby roots must not produce nearby first outputs.
  std::set<std::uint64_t> first;
  for (std::uint64_t s = 0; s < 256; ++s) first.insert(Rng(s).next_u64());
  CHECK(first.size() == 256);
}

TEST_CASE("uniform stays in range and has the right moments") {
  Rng rng(1);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sq / n - mean * mean == doctest::Approx(1.0 / 12).epsilon(0.02));
  CHECK(rng.uniform(3.0, 3.0) == 3.0);
}

TEST_CASE("normal has zero mean and unit variance") {
  Rng rng(2);
  const int n = 200000;
  double sum = 0.0, sq = 0.0, quart = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    REQUIRE(std::isfinite(z));
    sum += z;
    sq += z * z;
    quart += z * z * z * z;
  }
  // Standard errors: 1/sqrt(n) ~ 0.0022 for the mean, sqrt(2/n) for var.
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  CHECK(std::abs(quart / n - 3.0) < 0.1);
}

TEST_CASE("below is unbiased over a small range") {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  // Chi-square with 6 dof; 22.5 is the 0.999 quantile.
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 10000.0) * (c - 10000.0) / 10000.0;
  CHECK(chi2 < 22.5);
  CHECK(rng.below(1) == 0);
}

TEST_CASE("sample_without_replacement returns distinct in-range values") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = rng.sample_without_replacement(20, 8);
    REQUIRE(v.size() == 8);
    std::set<std::size_t> s(v.begin(), v.end());
    CHECK(s.size() == 8);
    CHECK(*s.rbegin() < 20);
  }
  const auto all = rng.sample_without_replacement(5, 5);
  CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 5);
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(5);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  auto w = v;
  rng.shuffle(w);
  CHECK(w != v);
  std::sort(w.begin(), w.end());
  CHECK(w == v);
}
