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

// Synthetic multi-view data.
//
// Each class j owns two orthogonal unit features v_{j,0}, v_{j,1} in R^d
// (feature index 2j + view). An input is a d x P patch matrix. A feature
// carried by an input is written on C_p disjoint patches as x_p = z_p v plus
// noise; the role of the feature fixes the interval its coefficient sum
// Σ z_p is drawn from:
//
//   multi-view ID:   both main features of y in mv_main, other classes'
//                    features (each w.p. s/k) in mv_minor;
//   single-view ID:  the picked view of y in sv_main, the other view of y in
//                    [rho, kRhoMult * rho], minor features in
//                    [gamma_sv / 2, gamma_sv];
//   OOD:             any feature (each w.p. s/k) in ood_feat.
//
// Every patch additionally carries feature noise Σ_v' α_{p,v'} v' with
// α ~ U[0, gamma]. Feature patches get N(0, sigma_p^2 I) noise, all other
// patches N(0, offpatch_noise_scale^2 I).

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvol/patch_matrix.hpp"
#include "mvol/rng.hpp"

namespace mvol {

inline constexpr double kZMaxMain = 2.0;
inline constexpr double kZMinMinor = 0.2;
inline constexpr double kRhoMult = 2.0;
inline constexpr double kMinorCap = 0.4;

// (log2(k + 2))^2, the concrete stand-in for polylog(k) used by all
// k-dependent defaults.
double polylog(int k);

inline int feature_index(int cls, int view) { return 2 * cls + view; }
inline int feature_class(int feature) { return feature / 2; }
inline int feature_view(int feature) { return feature % 2; }

class FeatureDictionary {
 public:
  FeatureDictionary() = default;
  // `vectors` holds 2k rows of length d, row f = feature f.
  FeatureDictionary(int k, int d, std::vector<double> vectors);

  int k() const { return k_; }
  int d() const { return d_; }
  int count() const { return 2 * k_; }
  std::span<const double> vector(int feature) const {
    return {vectors_.data() + static_cast<std::size_t>(feature) * d_,
            static_cast<std::size_t>(d_)};
  }
  std::span<const double> vector(int cls, int view) const {
    return vector(feature_index(cls, view));
  }
  const std::vector<double>& data() const { return vectors_; }

  friend bool operator==(const FeatureDictionary&,
                         const FeatureDictionary&) = default;

 private:
  int k_ = 0;
  int d_ = 0;
  std::vector<double> vectors_;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct GenConfig {
  int k = 10;
  int d = 64;
  int P = 16;
  int C_p = 2;
  double s = 2.0;
  double sigma_p = 0.0;
  double gamma = 0.0;
  double mu = 0.8;
  double rho = 0.0;
  double gamma_sv = 0.0;
  Interval mv_main{1.0, kZMaxMain};
  Interval mv_minor{kZMinMinor, kMinorCap};
  Interval ood_feat{kZMinMinor, kMinorCap};
  Interval sv_main{1.0, kZMaxMain};
  double offpatch_noise_scale = 0.0;
  // When false, OOD draws with no feature are redrawn (up to
  // kMaxFeatureRedraws times) so every OOD sample carries a minor feature.
  bool allow_pure_noise_ood = false;

  Interval sv_second() const { return {rho, kRhoMult * rho}; }
  Interval sv_minor() const { return {gamma_sv / 2.0, gamma_sv}; }

  // Expected number of minor features of an ID sample.
  double expected_minor_count() const;

  // Defaults for a given shape: sigma_p = 1/(sqrt(d) polylog(k)),
  // gamma = k^-1.5, rho = k^-0.01, gamma_sv = 1/polylog(k),
  // offpatch_noise_scale = gamma k / sqrt(d).
  static GenConfig defaults(int k = 10, int d = 64, int P = 16);

  // Throws ConfigError when an invariant does not hold.
  void validate() const;

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline constexpr int kMaxFeatureRedraws = 100;

enum class SampleKind : std::uint8_t {
  MultiViewID = 0,
  SingleViewID = 1,
  OOD = 2,
};

std::string to_string(SampleKind kind);

enum class FeatureRole {
  Main,
  SecondMain,
  Minor,
  OodMinor,
};

struct FeatureUse {
  int feature = 0;
  std::vector<int> patches;
  std::vector<double> coeffs;  // parallel to `patches`

  double total() const;
  friend bool operator==(const FeatureUse&, const FeatureUse&) = default;
};

struct Sample {
  PatchMatrix X;
  SampleKind kind = SampleKind::OOD;
  std::optional<int> label;
  std::vector<FeatureUse> features;
  std::optional<int> picked_view;

  bool is_id() const { return kind != SampleKind::OOD; }
  const FeatureUse* find(int feature) const;
  // Role of a used feature, derived from kind/label/picked_view.
  FeatureRole role(int feature) const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Coefficient interval a feature with the given role must respect.
Interval role_interval(const GenConfig& cfg, SampleKind kind, FeatureRole role);

struct Dataset {
  std::vector<Sample> samples;
  GenConfig gen_config;
  std::uint64_t seed = 0;
  double alpha = 0.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// 2k orthonormal vectors: Gram-Schmidt (applied twice) on Gaussian draws,
// i.e. the first 2k columns of a Haar-random rotation.
FeatureDictionary make_feature_dictionary(int k, int d, Rng& rng);

Sample sample_multiview(const FeatureDictionary& dict, const GenConfig& cfg,
                        int y, Rng& rng);
Sample sample_singleview(const FeatureDictionary& dict, const GenConfig& cfg,
                         int y, Rng& rng);
Sample sample_ood(const FeatureDictionary& dict, const GenConfig& cfg,
                  Rng& rng);

// Sample i is drawn from the substream (seed, "id", i), so the result does
// not depend on `workers`.
Dataset make_id_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                        std::size_t n, std::uint64_t seed, int workers = 1);
Dataset make_ood_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                         std::size_t n, std::uint64_t seed, int workers = 1);
// floor(alpha * m) ID samples plus OOD samples, deterministically shuffled.
// ID samples keep their labels in metadata; training treats the whole set as
// auxiliary outliers.
Dataset make_wild_dataset(const FeatureDictionary& dict, const GenConfig& cfg,
                          std::size_t m, double alpha, std::uint64_t seed,
                          int workers = 1);

std::size_t wild_id_count(std::size_t m, double alpha);

}  // namespace mvol
