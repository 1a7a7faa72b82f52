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

// Metadata and weight-space diagnostics.
//
// For a sample, I(X) is the class whose two features carry the largest total
// coefficient and z(X) is that total. For a network,
//   Φ_{i,ℓ} = Σ_r [<w_{i,r}, v_{i,ℓ}>]^+   and   Λ_{i,ℓ} = max_r [...]^+,
// so Φ >= Λ >= 0 elementwise.

#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mvol/datagen.hpp"
#include "mvol/metrics.hpp"
#include "mvol/network.hpp"

namespace mvol {

struct SampleIZ {
  int I = 0;
  double z = 0.0;
};

// Ties go to the lowest class. Throws MissingMetadata when an ID sample has
// no recorded features or a feature index lies outside [2k).
SampleIZ sample_IZ(const Sample& sample, int k);

struct Proposition1Report {
  bool holds = true;
  bool vacuous = false;
  std::string warning;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  double min_id_z = 0.0;
  double max_ood_z = 0.0;
  // min_id_z - max_ood_z.
  double margin = 0.0;
  // ID samples with z <= max_ood_z.
  std::size_t violations = 0;

  nlohmann::json to_json() const;
};

// An empty split makes the check vacuous: it holds, with a warning.
Proposition1Report check_proposition1(const Dataset& id, const Dataset& ood);

struct FeatureCoverage {
  int k = 0;
  std::vector<double> phi;         // k x 2, row-major
  std::vector<double> lambda_max;  // k x 2, row-major
  std::vector<bool> learned;       // k x 2, phi >= threshold
  double threshold = 0.0;

  double phi_at(int i, int view) const { return phi[2 * i + view]; }
  double lambda_at(int i, int view) const { return lambda_max[2 * i + view]; }
  bool learned_at(int i, int view) const { return learned[2 * i + view]; }
  int learned_in_class(int i) const;
  int learned_total() const;

  nlohmann::json to_json() const;
};

// max(5 sigma0 sqrt(m), 0.5 median_i max_ℓ Φ_{i,ℓ}).
double default_coverage_threshold(const Network& net,
                                  const FeatureDictionary& dict);

// A negative threshold selects default_coverage_threshold.
FeatureCoverage feature_coverage(const Network& net,
                                 const FeatureDictionary& dict,
                                 double coverage_threshold = -1.0);

enum class AssumptionMode { AllFeatures, LearnedOnly };
std::string to_string(AssumptionMode mode);

struct AssumptionReport {
  AssumptionMode mode = AssumptionMode::AllFeatures;
  double tol = 0.1;
  bool passed = true;
  // Every considered Φ is zero, or no feature is considered.
  bool degenerate = false;
  std::size_t n_features = 0;
  // max over pairs of |a - b| / max(a, b); 0 when both are 0.
  double max_rel_deviation = 0.0;
  int worst_a = -1;  // feature indices 2i + ℓ
  int worst_b = -1;

  nlohmann::json to_json() const;
};

AssumptionReport check_assumption(const FeatureCoverage& coverage,
                                  AssumptionMode mode, double tol = 0.1);
AssumptionReport check_assumption(const Network& net,
                                  const FeatureDictionary& dict,
                                  AssumptionMode mode, double tol = 0.1,
                                  double coverage_threshold = -1.0);

struct ModelDiagnostics {
  EvalReport report;
  FeatureCoverage coverage;
  AssumptionReport assumption;
};

struct TheoremVerdict {
  double mu = 0.0;
  double slack = 0.0;
  double fnr_single = 0.0;
  double fnr_distill = 0.0;
  double bound_single = 0.0;   // (1 - mu) / 2 + slack
  double bound_distill = 0.0;  // slack
  bool single_within_bound = false;
  bool distill_within_bound = false;
  bool distill_not_worse = false;

  nlohmann::json to_json() const;
};

// Throws AssumptionNotSatisfied unless the single model passed the
// learned-only check and the distilled model the all-features check.
TheoremVerdict check_theorem_bounds(const ModelDiagnostics& single,
                                    const ModelDiagnostics& distill,
                                    double mu, double slack = 0.1);

}  // namespace mvol
