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

#include "mvol/datagen.hpp"

#include <cmath>
#include <sstream>

#include "mvol/errors.hpp"
#include "mvol/parallel.hpp"

namespace mvol {

double polylog(int k) {
  const double l = std::log2(static_cast<double>(k) + 2.0);
  return l * l;
}

FeatureDictionary::FeatureDictionary(int k, int d, std::vector<double> vectors)
    : k_(k), d_(d), vectors_(std::move(vectors)) {
  if (vectors_.size() != static_cast<std::size_t>(2 * k) * d) {
    throw ShapeMismatch("dictionary expects 2k*d entries");
  }
}

double GenConfig::expected_minor_count() const {
  return static_cast<double>(2 * (k - 1)) * s / static_cast<double>(k);
}

GenConfig GenConfig::defaults(int k, int d, int P) {
  GenConfig cfg;
  cfg.k = k;
  cfg.d = d;
  cfg.P = P;
  const double pl = polylog(k);
  cfg.sigma_p = 1.0 / (std::sqrt(static_cast<double>(d)) * pl);
  cfg.gamma = std::pow(static_cast<double>(k), -1.5);
  cfg.rho = std::pow(static_cast<double>(k), -0.01);
  cfg.gamma_sv = 1.0 / pl;
  cfg.offpatch_noise_scale =
      cfg.gamma * k / std::sqrt(static_cast<double>(d));
  // s must not exceed k^0.2.
  cfg.s = std::min(2.0, std::pow(static_cast<double>(k), 0.2));
  return cfg;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void require_interval(const Interval& iv, const char* name) {
  std::ostringstream os;
  os << name << " interval [" << iv.lo << ", " << iv.hi << "] is invalid";
  require(iv.lo >= 0.0 && iv.lo <= iv.hi, os.str());
}

}  // namespace

void GenConfig::validate() const {
  require(k >= 1, "k must be at least 1");
  require(d >= 1 && P >= 1 && C_p >= 1, "d, P and C_p must be positive");
  if (d < 2 * k) throw DimensionTooSmall("d must be at least 2k");
  require(s >= 1.0 && s <= std::pow(static_cast<double>(k), 0.2) + 1e-12,
          "s must lie in [1, k^0.2]");
  require(mu >= 0.0 && mu <= 1.0, "mu must lie in [0, 1]");
  require(sigma_p >= 0.0 && gamma >= 0.0 && offpatch_noise_scale >= 0.0,
          "noise scales must be non-negative");
  require(C_p * (2.0 + expected_minor_count()) <= P,
          "C_p * (2 + expected minor count) exceeds P");
  require_interval(mv_main, "mv_main");
  require_interval(mv_minor, "mv_minor");
  require_interval(ood_feat, "ood_feat");
  require_interval(sv_main, "sv_main");
  require_interval(sv_second(), "sv_second");
  require_interval(sv_minor(), "sv_minor");
  require(mv_minor.hi <= kMinorCap && ood_feat.hi <= kMinorCap,
          "minor feature coefficients must not exceed 0.4");
}

std::string to_string(SampleKind kind) {
  switch (kind) {
    case SampleKind::MultiViewID:
      return "multi_view";
    case SampleKind::SingleViewID:
      return "single_view";
    case SampleKind::OOD:
      return "ood";
  }
  return "unknown";
}

double FeatureUse::total() const {
  double t = 0.0;
  for (double z : coeffs) t += z;
  return t;
}

const FeatureUse* Sample::find(int feature) const {
  for (const auto& f : features) {
    if (f.feature == feature) return &f;
  }
  return nullptr;
}

FeatureRole Sample::role(int feature) const {
  if (kind == SampleKind::OOD) return FeatureRole::OodMinor;
  if (!label) throw MissingMetadata("ID sample without label");
  if (feature_class(feature) != *label) return FeatureRole::Minor;
  if (kind == SampleKind::MultiViewID) return FeatureRole::Main;
  if (!picked_view) throw MissingMetadata("single-view sample without view");
  return feature_view(feature) == *picked_view ? FeatureRole::Main
                                               : FeatureRole::SecondMain;
}

Interval role_interval(const GenConfig& cfg, SampleKind kind,
                       FeatureRole role) {
  switch (role) {
    case FeatureRole::OodMinor:
      return cfg.ood_feat;
    case FeatureRole::Main:
      return kind == SampleKind::MultiViewID ? cfg.mv_main : cfg.sv_main;
    case FeatureRole::SecondMain:
      return cfg.sv_second();
    case FeatureRole::Minor:
      return kind == SampleKind::MultiViewID ? cfg.mv_minor : cfg.sv_minor();
  }
  return {};
}

FeatureDictionary make_feature_dictionary(int k, int d, Rng& rng) {
  if (d < 2 * k) throw DimensionTooSmall("make_feature_dictionary: d < 2k");
  const int n = 2 * k;
  std::vector<double> v(static_cast<std::size_t>(n) * d);
  for (auto& x : v) x = rng.normal();
  auto row = [&](int f) {
    return std::span<double>(v.data() + static_cast<std::size_t>(f) * d,
                             static_cast<std::size_t>(d));
  };
  for (int f = 0; f < n; ++f) {
    auto a = row(f);
    // Two passes of modified Gram-Schmidt restore orthogonality to roundoff.
    for (int pass = 0; pass < 2; ++pass) {
      for (int g = 0; g < f; ++g) {
        auto b = row(g);
        const double c = dot(a, b);
        for (int i = 0; i < d; ++i) a[i] -= c * b[i];
      }
    }
    const double norm = std::sqrt(dot(a, a));
    for (int i = 0; i < d; ++i) a[i] /= norm;
  }
  return FeatureDictionary(k, d, std::move(v));
}

namespace {

struct PlannedFeature {
  int feature;
  Interval interval;
};

// Draws the coefficient split and patch placement, then renders X.
Sample render(const FeatureDictionary& dict, const GenConfig& cfg,
              std::vector<PlannedFeature> planned, Rng& rng) {
  const int d = cfg.d;
  const int P = cfg.P;
  if (static_cast<long>(planned.size()) * cfg.C_p > P) {
    throw PatchBudgetExceeded("features need more patches than P");
  }
  Sample s;
  s.X = PatchMatrix(d, P);
  const auto slots = rng.sample_without_replacement(
      static_cast<std::size_t>(P), planned.size() * cfg.C_p);
  std::vector<int> owner(P, -1);  // index into s.features, or -1
  for (std::size_t f = 0; f < planned.size(); ++f) {
    FeatureUse use;
    use.feature = planned[f].feature;
    const double total =
        rng.uniform(planned[f].interval.lo, planned[f].interval.hi);
    // Uniform point on the simplex: normalized exponentials.
    std::vector<double> w(cfg.C_p);
    double wsum = 0.0;
    for (auto& x : w) {
      x = -std::log(1.0 - rng.uniform());
      wsum += x;
    }
    for (int c = 0; c < cfg.C_p; ++c) {
      const int p = static_cast<int>(slots[f * cfg.C_p + c]);
      use.patches.push_back(p);
      use.coeffs.push_back(wsum > 0.0 ? total * w[c] / wsum
                                      : total / cfg.C_p);
      owner[p] = static_cast<int>(f);
    }
    s.features.push_back(std::move(use));
  }

  for (int p = 0; p < P; ++p) {
    auto x = s.X.patch(p);
    for (int f = 0; f < dict.count(); ++f) {
      const double a = rng.uniform(0.0, cfg.gamma);
      const auto v = dict.vector(f);
      for (int i = 0; i < d; ++i) x[i] += a * v[i];
    }
    double noise = cfg.offpatch_noise_scale;
    if (owner[p] >= 0) {
      const auto& use = s.features[owner[p]];
      double z = 0.0;
      for (std::size_t c = 0; c < use.patches.size(); ++c) {
        if (use.patches[c] == p) z = use.coeffs[c];
      }
      const auto v = dict.vector(use.feature);
      for (int i = 0; i < d; ++i) x[i] += z * v[i];
      noise = cfg.sigma_p;
    }
    for (int i = 0; i < d; ++i) x[i] += noise * rng.normal();
  }
  return s;
}

// Features of classes other than `y` (all classes when y < 0), each kept
// w.p. s/k. Redrawn while the draw would not fit in the patch budget.
std::vector<int> draw_minor_set(const GenConfig& cfg, int y, int mandatory,
                                bool require_nonempty, Rng& rng) {
  const double p = cfg.s / cfg.k;
  const int budget = cfg.P / cfg.C_p - mandatory;
  if (budget < 0) {
    throw PatchBudgetExceeded("main features alone exceed the patch budget");
  }
  std::vector<int> chosen;
  for (int attempt = 0; attempt <= kMaxFeatureRedraws; ++attempt) {
    chosen.clear();
    for (int f = 0; f < 2 * cfg.k; ++f) {
      if (feature_class(f) == y) continue;
      if (rng.bernoulli(p)) chosen.push_back(f);
    }
    const bool fits = static_cast<int>(chosen.size()) <= budget;
    if (fits && (!require_nonempty || !chosen.empty())) return chosen;
    if (fits && attempt == kMaxFeatureRedraws) return chosen;
  }
  throw PatchBudgetExceeded("could not draw a feature set within P patches");
}

void check_label(const GenConfig& cfg, int y) {
  if (y < 0 || y >= cfg.k) throw ConfigError("label out of range");
}

}  // namespace

Sample sample_multiview(const FeatureDictionary& dict, const GenConfig& cfg,
                        int y, Rng& rng) {
  check_label(cfg, y);
  std::vector<PlannedFeature> planned = {
      {feature_index(y, 0), cfg.mv_main}, {feature_index(y, 1), cfg.mv_main}};
  for (int f : draw_minor_set(cfg, y, 2, false, rng)) {
    planned.push_back({f, cfg.mv_minor});
  }
  Sample s = render(dict, cfg, std::move(planned), rng);
  s.kind = SampleKind::MultiViewID;
  s.label = y;
  return s;
}

Sample sample_singleview(const FeatureDictionary& dict, const GenConfig& cfg,
                         int y, Rng& rng) {
  check_label(cfg, y);
  const int view = static_cast<int>(rng.below(2));
  std::vector<PlannedFeature> planned = {
      {feature_index(y, view), cfg.sv_main},
      {feature_index(y, 1 - view), cfg.sv_second()}};
  for (int f : draw_minor_set(cfg, y, 2, false, rng)) {
    planned.push_back({f, cfg.sv_minor()});
  }
  Sample s = render(dict, cfg, std::move(planned), rng);
  s.kind = SampleKind::SingleViewID;
  s.label = y;
  s.picked_view = view;
  return s;
}

Sample sample_ood(const FeatureDictionary& dict, const GenConfig& cfg,
                  Rng& rng) {
  std::vector<PlannedFeature> planned;
  for (int f : draw_minor_set(cfg, -1, 0, !cfg.allow_pure_noise_ood, rng)) {
    planned.push_back({f, cfg.ood_feat});
  }
  Sample s = render(dict, cfg, std::move(planned), rng);
  s.kind = SampleKind::OOD;
  return s;
}

namespace {

Sample draw_id(const FeatureDictionary& dict, const GenConfig& cfg, Rng& rng) {
  const int y = static_cast<int>(rng.below(static_cast<std::size_t>(cfg.k)));
  return rng.bernoulli(cfg.mu) ? sample_multiview(dict, cfg, y, rng)
                               : sample_singleview(dict, cfg, y, rng);
}

void check_dict(const FeatureDictionary& dict, const GenConfig& cfg) {
  cfg.validate();
  if (dict.k() != cfg.k || dict.d() != cfg.d) {
    throw ShapeMismatch("dictionary shape does not match GenConfig");
  }
}

}  // namespace

Dataset make_id_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                        std::size_t n, std::uint64_t seed, int workers) {
  check_dict(dict, cfg);
  if (n == 0) throw ConfigError("make_id_dataset: n must be at least 1");
  Dataset ds{std::vector<Sample>(n), cfg, seed, 0.0};
  parallel_for(n, workers, [&](std::size_t i) {
    Rng rng = Rng::derive(seed, "id", i);
    ds.samples[i] = draw_id(dict, cfg, rng);
  });
  return ds;
}

Dataset make_ood_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                         std::size_t n, std::uint64_t seed, int workers) {
  check_dict(dict, cfg);
  Dataset ds{std::vector<Sample>(n), cfg, seed, 0.0};
  parallel_for(n, workers, [&](std::size_t i) {
    Rng rng = Rng::derive(seed, "ood", i);
    ds.samples[i] = sample_ood(dict, cfg, rng);
  });
  return ds;
}

std::size_t wild_id_count(std::size_t m, double alpha) {
  // The small bias keeps e.g. 0.3 * 1000 from rounding down to 299.
  return static_cast<std::size_t>(
      std::floor(alpha * static_cast<double>(m) + 1e-9));
}

Dataset make_wild_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                          std::size_t m, double alpha, std::uint64_t seed,
                          int workers) {
  check_dict(dict, cfg);
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("make_wild_dataset: alpha must lie in [0, 1]");
  }
  const std::size_t n_id = wild_id_count(m, alpha);
  std::vector<Sample> drawn(m);
  parallel_for(m, workers, [&](std::size_t i) {
    if (i < n_id) {
      Rng rng = Rng::derive(seed, "wild/id", i);
      drawn[i] = draw_id(dict, cfg, rng);
    } else {
      Rng rng = Rng::derive(seed, "wild/ood", i - n_id);
      drawn[i] = sample_ood(dict, cfg, rng);
    }
  });
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  Rng shuffle_rng = Rng::derive(seed, "wild/shuffle");
  shuffle_rng.shuffle(order);
  Dataset ds{{}, cfg, seed, alpha};
  ds.samples.reserve(m);
  for (std::size_t i : order) ds.samples.push_back(std::move(drawn[i]));
  return ds;
}

}  // namespace mvol
