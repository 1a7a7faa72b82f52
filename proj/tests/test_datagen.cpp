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

#include <cmath>
#include <set>

#include "mvol/datagen.hpp"
#include "mvol/diagnostics.hpp"
#include "mvol/errors.hpp"

using namespace mvol;

namespace {

double gram_error(const FeatureDictionary& dict) {
  double worst = 0.0;
  for (int a = 0; a < dict.count(); ++a) {
    for (int b = 0; b < dict.count(); ++b) {
      const double g = dot(dict.vector(a), dict.vector(b));
      worst = std::max(worst, std::abs(g - (a == b ? 1.0 : 0.0)));
    }
  }
  return worst;
}

GenConfig noiseless(int k, int d, int P) {
  GenConfig cfg = GenConfig::defaults(k, d, P);
  cfg.sigma_p = 0.0;
  cfg.gamma = 0.0;
  cfg.offpatch_noise_scale = 0.0;
  return cfg;
}

// Σ over the feature's patches of <x_p, v>.
double projected_total(const Sample& s, const FeatureDictionary& dict,
                       const FeatureUse& use) {
  double t = 0.0;
  for (int p : use.patches) t += dot(s.X.patch(p), dict.vector(use.feature));
  return t;
}

void check_metadata_consistent(const Sample& s, const GenConfig& cfg) {
  std::set<int> used_patches;
  std::set<int> used_features;
  for (const auto& use : s.features) {
    REQUIRE(use.patches.size() == static_cast<std::size_t>(cfg.C_p));
    REQUIRE(use.coeffs.size() == use.patches.size());
    CHECK(used_features.insert(use.feature).second);
    for (int p : use.patches) {
      CHECK(p >= 0);
      CHECK(p < cfg.P);
      // Patches are never shared between features.
      CHECK(used_patches.insert(p).second);
    }
    for (double z : use.coeffs) CHECK(z >= 0.0);
    const Interval iv = role_interval(cfg, s.kind, s.role(use.feature));
    CHECK(use.total() >= iv.lo - 1e-12);
    CHECK(use.total() <= iv.hi + 1e-12);
  }
}

}  // namespace

TEST_CASE("dictionary: k=2, d=4 is a full orthonormal basis") {
  Rng rng(11);
  const auto dict = make_feature_dictionary(2, 4, rng);
  CHECK(dict.count() == 4);
  CHECK(gram_error(dict) < 1e-12);
  // Spanning R^4: each basis vector is recovered from its projections.
  for (int e = 0; e < 4; ++e) {
    double norm2 = 0.0;
    for (int f = 0; f < 4; ++f) norm2 += dict.vector(f)[e] * dict.vector(f)[e];
    CHECK(norm2 == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("dictionary: k=10, d=64 Gram matrix is the identity") {
  Rng rng(12);
  const auto dict = make_feature_dictionary(10, 64, rng);
  CHECK(dict.count() == 20);
  CHECK(gram_error(dict) < 1e-12);
}

TEST_CASE("dictionary: 2k > d is rejected") {
  Rng rng(13);
  CHECK_THROWS_AS(make_feature_dictionary(3, 5, rng), DimensionTooSmall);
}

TEST_CASE("multi-view, noiseless and without minor features") {
  Rng drng(14);
  auto cfg = noiseless(2, 16, 8);
  cfg.s = 0.0;  // sampler-level limit; validate() would reject it
  const auto dict = make_feature_dictionary(2, 16, drng);
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::derive(15, "mv", trial);
    const int y = trial % 2;
    const Sample s = sample_multiview(dict, cfg, y, rng);
    CHECK(s.kind == SampleKind::MultiViewID);
    REQUIRE(s.features.size() == 2);
    std::set<int> f{s.features[0].feature, s.features[1].feature};
    CHECK(f == std::set<int>{feature_index(y, 0), feature_index(y, 1)});
    for (const auto& use : s.features) {
      for (std::size_t c = 0; c < use.patches.size(); ++c) {
        CHECK(dot(s.X.patch(use.patches[c]), dict.vector(use.feature)) ==
              doctest::Approx(use.coeffs[c]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("thought-experiment weights: main sums 1, minor sums 0.1") {
  Rng drng(16);
  GenConfig cfg = GenConfig::defaults(2, 32, 8);
  cfg.C_p = 1;
  cfg.s = 1.0;
  cfg.mv_main = {1.0, 1.0};
  cfg.mv_minor = {0.1, 0.1};
  cfg.sigma_p = 0.0;
  cfg.gamma = 0.0;
  const auto dict = make_feature_dictionary(2, 32, drng);
  int minors = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng = Rng::derive(17, "mv", trial);
    const Sample s = sample_multiview(dict, cfg, trial % 2, rng);
    for (const auto& use : s.features) {
      const double want =
          feature_class(use.feature) == trial % 2 ? 1.0 : 0.1;
      if (want == 0.1) ++minors;
      CHECK(use.total() == doctest::Approx(want).epsilon(1e-12));
      CHECK(projected_total(s, dict, use) ==
            doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK(minors > 0);
}

TEST_CASE("projection oracle reproduces coefficients under default noise") {
  Rng drng(18);
  const GenConfig cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  const double tol =
      cfg.C_p * (cfg.gamma * 2 * cfg.k + 4.0 * cfg.sigma_p);
  const Dataset id = make_id_dataset(dict, cfg, 500, 19);
  const Dataset ood = make_ood_dataset(dict, cfg, 500, 20);
  for (const Dataset* ds : {&id, &ood}) {
    for (const auto& s : ds->samples) {
      check_metadata_consistent(s, cfg);
      for (const auto& use : s.features) {
        CHECK(std::abs(projected_total(s, dict, use) - use.total()) <= tol);
      }
    }
  }
}

TEST_CASE("single-view: picked view dominates in the noiseless case") {
  Rng drng(21);
  auto cfg = noiseless(10, 64, 16);
  // The second main feature must stay below the main one, so rho * kRhoMult
  // < 1 here; at the default rho the two intervals overlap.
  cfg.rho = 0.4;
  const auto dict = make_feature_dictionary(10, 64, drng);
  for (int trial = 0; trial < 300; ++trial) {
    Rng rng = Rng::derive(22, "sv", trial);
    const int y = trial % 10;
    const Sample s = sample_singleview(dict, cfg, y, rng);
    REQUIRE(s.picked_view.has_value());
    const FeatureUse* best = &s.features.front();
    for (const auto& use : s.features) {
      if (use.total() > best->total()) best = &use;
    }
    CHECK(best->feature == feature_index(y, *s.picked_view));
    check_metadata_consistent(s, cfg);
  }
}

TEST_CASE("single-view: default rho puts the second main sum in range") {
  Rng drng(23);
  const GenConfig cfg = GenConfig::defaults(10, 64, 16);
  const double rho = std::pow(10.0, -0.01);
  CHECK(cfg.rho == doctest::Approx(rho).epsilon(1e-15));
  const auto dict = make_feature_dictionary(10, 64, drng);
  for (int trial = 0; trial < 300; ++trial) {
    Rng rng = Rng::derive(24, "sv", trial);
    const int y = trial % 10;
    const Sample s = sample_singleview(dict, cfg, y, rng);
    const FeatureUse* second = s.find(feature_index(y, 1 - *s.picked_view));
    REQUIRE(second != nullptr);
    CHECK(second->total() >= rho - 1e-12);
    CHECK(second->total() <= kRhoMult * rho + 1e-12);
    CHECK(rho == doctest::Approx(0.977).epsilon(1e-3));
  }
}

TEST_CASE("ID samples have z >= 1, OOD samples z <= 0.8") {
  Rng drng(25);
  const GenConfig cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  const Dataset id = make_id_dataset(dict, cfg, 10000, 26);
  const Dataset ood = make_ood_dataset(dict, cfg, 10000, 27);
  double min_id = 1e9, max_ood = -1e9;
  for (const auto& s : id.samples) min_id = std::min(min_id, sample_IZ(s, 10).z);
  for (const auto& s : ood.samples) {
    max_ood = std::max(max_ood, sample_IZ(s, 10).z);
    CHECK(!s.features.empty());
  }
  CHECK(min_id >= 1.0);
  CHECK(max_ood <= 0.8);
}

TEST_CASE("OOD: pure-noise draws allowed when s -> 0") {
  Rng drng(28);
  auto cfg = GenConfig::defaults(10, 64, 16);
  cfg.s = 0.0;
  cfg.allow_pure_noise_ood = true;
  const auto dict = make_feature_dictionary(10, 64, drng);
  Rng rng(29);
  const Sample s = sample_ood(dict, cfg, rng);
  CHECK(s.kind == SampleKind::OOD);
  CHECK(s.features.empty());
  CHECK(!s.label.has_value());
}

TEST_CASE("OOD: noiseless per-class projection sums stay below 1") {
  Rng drng(30);
  const auto cfg = noiseless(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  const Dataset ood = make_ood_dataset(dict, cfg, 2000, 31);
  for (const auto& s : ood.samples) {
    for (int j = 0; j < 10; ++j) {
      double total = 0.0;
      for (int view = 0; view < 2; ++view) {
        for (int p = 0; p < cfg.P; ++p) {
          total += dot(s.X.patch(p), dict.vector(j, view));
        }
      }
      CHECK(total < 1.0);
    }
  }
}

TEST_CASE("ID mixture: mu controls the multi-view fraction") {
  Rng drng(32);
  auto cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  cfg.mu = 1.0;
  for (const auto& s : make_id_dataset(dict, cfg, 500, 33).samples) {
    CHECK(s.kind == SampleKind::MultiViewID);
  }
  cfg.mu = 0.8;
  const Dataset ds = make_id_dataset(dict, cfg, 10000, 34);
  int mv = 0;
  for (const auto& s : ds.samples) mv += s.kind == SampleKind::MultiViewID;
  CHECK(std::abs(mv / 10000.0 - 0.8) <= 0.02);
  for (const auto& s : ds.samples) {
    REQUIRE(s.label.has_value());
    CHECK(*s.label >= 0);
    CHECK(*s.label < 10);
  }
}

TEST_CASE("datasets are deterministic and independent of the worker count") {
  Rng drng(35);
  const auto cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  const Dataset a = make_id_dataset(dict, cfg, 300, 36, 1);
  const Dataset b = make_id_dataset(dict, cfg, 300, 36, 1);
  const Dataset c = make_id_dataset(dict, cfg, 300, 36, 4);
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a != make_id_dataset(dict, cfg, 300, 37, 1));
  CHECK(make_wild_dataset(dict, cfg, 200, 0.3, 38, 1) ==
        make_wild_dataset(dict, cfg, 200, 0.3, 38, 3));
}

TEST_CASE("wild mixing fractions") {
  Rng drng(39);
  const auto cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  auto count_id = [](const Dataset& ds) {
    std::size_t n = 0;
    for (const auto& s : ds.samples) n += s.is_id();
    return n;
  };
  const Dataset w0 = make_wild_dataset(dict, cfg, 1000, 0.0, 40);
  CHECK(w0.size() == 1000);
  CHECK(count_id(w0) == 0);
  const Dataset w5 = make_wild_dataset(dict, cfg, 1000, 0.5, 41);
  CHECK(w5.size() == 1000);
  CHECK(count_id(w5) == 500);
  CHECK(w5.alpha == 0.5);
  for (const auto& s : w5.samples) {
    if (s.is_id()) CHECK(s.label.has_value());
  }
  const Dataset w1 = make_wild_dataset(dict, cfg, 1000, 1.0, 42);
  CHECK(count_id(w1) == 1000);
  CHECK(wild_id_count(1000, 0.1) == 100);
  CHECK(wild_id_count(1000, 0.3) == 300);
  CHECK_THROWS_AS(make_wild_dataset(dict, cfg, 10, 1.5, 43), ConfigError);
  // The ID part is shuffled in, not appended.
  bool early_id = false;
  for (std::size_t i = 0; i < 100; ++i) early_id |= w5.samples[i].is_id();
  CHECK(early_id);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(GenConfig::defaults(10, 64, 16).validate());
  CHECK(GenConfig::defaults(10, 64, 16).s <= std::pow(10.0, 0.2));
  auto cfg = GenConfig::defaults(10, 64, 16);
  cfg.s = 3.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig::defaults(10, 64, 16);
  cfg.mv_minor = {0.2, 0.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig::defaults(10, 64, 16);
  cfg.ood_feat = {0.3, 0.2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig::defaults(10, 64, 4);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig::defaults(10, 16, 16);
  CHECK_THROWS_AS(cfg.validate(), DimensionTooSmall);
  cfg = GenConfig::defaults(10, 64, 16);
  cfg.mu = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("feature roles follow the sample kind") {
  Rng drng(44);
  auto cfg = GenConfig::defaults(10, 64, 16);
  const auto dict = make_feature_dictionary(10, 64, drng);
  Rng rng(45);
  const Sample sv = sample_singleview(dict, cfg, 3, rng);
  CHECK(sv.role(feature_index(3, *sv.picked_view)) == FeatureRole::Main);
  CHECK(sv.role(feature_index(3, 1 - *sv.picked_view)) ==
        FeatureRole::SecondMain);
  CHECK(sv.role(feature_index(4, 0)) == FeatureRole::Minor);
  const Sample mv = sample_multiview(dict, cfg, 3, rng);
  CHECK(mv.role(feature_index(3, 1)) == FeatureRole::Main);
  CHECK(!mv.picked_view.has_value());
  CHECK_THROWS_AS(sample_multiview(dict, cfg, 10, rng), ConfigError);
}
