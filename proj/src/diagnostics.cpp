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

#include "mvol/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvol/errors.hpp"

namespace mvol {

using nlohmann::json;

SampleIZ sample_IZ(const Sample& sample, int k) {
  if (sample.is_id() && sample.features.empty()) {
    throw MissingMetadata("sample_IZ: ID sample without feature metadata");
  }
  std::vector<double> per_class(k, 0.0);
  for (const auto& f : sample.features) {
    if (f.feature < 0 || f.feature >= 2 * k) {
      throw MissingMetadata("sample_IZ: feature index out of range");
    }
    per_class[feature_class(f.feature)] += f.total();
  }
  SampleIZ out{0, per_class[0]};
  for (int j = 1; j < k; ++j) {
    if (per_class[j] > out.z) out = {j, per_class[j]};
  }
  return out;
}

json Proposition1Report::to_json() const {
  return {{"holds", holds},         {"vacuous", vacuous},
          {"warning", warning},     {"n_id", n_id},
          {"n_ood", n_ood},         {"min_id_z", min_id_z},
          {"max_ood_z", max_ood_z}, {"margin", margin},
          {"violations", violations}};
}

Proposition1Report check_proposition1(const Dataset& id, const Dataset& ood) {
  Proposition1Report r;
  r.n_id = id.size();
  r.n_ood = ood.size();
  if (id.empty() || ood.empty()) {
    r.vacuous = true;
    r.warning = id.empty() ? "empty ID set" : "empty OOD set";
    return r;
  }
  const int k = id.gen_config.k;
  std::vector<double> id_z;
  id_z.reserve(id.size());
  r.min_id_z = std::numeric_limits<double>::infinity();
  for (const auto& s : id.samples) {
    id_z.push_back(sample_IZ(s, k).z);
    r.min_id_z = std::min(r.min_id_z, id_z.back());
  }
  r.max_ood_z = -std::numeric_limits<double>::infinity();
  for (const auto& s : ood.samples) {
    r.max_ood_z = std::max(r.max_ood_z, sample_IZ(s, k).z);
  }
  for (double z : id_z) r.violations += z <= r.max_ood_z;
  r.margin = r.min_id_z - r.max_ood_z;
  r.holds = r.violations == 0;
  return r;
}

int FeatureCoverage::learned_in_class(int i) const {
  return static_cast<int>(learned[2 * i]) + static_cast<int>(learned[2 * i + 1]);
}

int FeatureCoverage::learned_total() const {
  return static_cast<int>(std::count(learned.begin(), learned.end(), true));
}

json FeatureCoverage::to_json() const {
  json phi_rows = json::array(), lambda_rows = json::array(),
       mask_rows = json::array();
  for (int i = 0; i < k; ++i) {
    phi_rows.push_back({phi_at(i, 0), phi_at(i, 1)});
    lambda_rows.push_back({lambda_at(i, 0), lambda_at(i, 1)});
    mask_rows.push_back({learned_at(i, 0), learned_at(i, 1)});
  }
  return {{"k", k},
          {"threshold", threshold},
          {"phi", phi_rows},
          {"lambda_max", lambda_rows},
          {"learned", mask_rows},
          {"learned_total", learned_total()}};
}

namespace {

// Φ and Λ for every (class, view).
void alignments(const Network& net, const FeatureDictionary& dict,
                std::vector<double>& phi, std::vector<double>& lam) {
  if (net.k() != dict.k() || net.d() != dict.d()) {
    throw ShapeMismatch("feature_coverage: network/dictionary shape");
  }
  phi.assign(2 * net.k(), 0.0);
  lam.assign(2 * net.k(), 0.0);
  for (int i = 0; i < net.k(); ++i) {
    for (int view = 0; view < 2; ++view) {
      const auto v = dict.vector(i, view);
      for (int r = 0; r < net.m(); ++r) {
        const double a = std::max(0.0, dot(net.weight(i, r), v));
        phi[2 * i + view] += a;
        lam[2 * i + view] = std::max(lam[2 * i + view], a);
      }
    }
  }
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double threshold_from_phi(const std::vector<double>& phi, const Network& net) {
  std::vector<double> best(net.k());
  for (int i = 0; i < net.k(); ++i) {
    best[i] = std::max(phi[2 * i], phi[2 * i + 1]);
  }
  // At init each Φ entry is a sum of m half-normal terms of scale sigma0,
  // mean ~0.4 m sigma0 and spread ~0.6 sqrt(m) sigma0.
  const double floor =
      5.0 * net.sigma0() * std::sqrt(static_cast<double>(net.m()));
  return std::max(floor, 0.5 * median(best));
}

}  // namespace

double default_coverage_threshold(const Network& net,
                                  const FeatureDictionary& dict) {
  std::vector<double> phi, lam;
  alignments(net, dict, phi, lam);
  return threshold_from_phi(phi, net);
}

FeatureCoverage feature_coverage(const Network& net,
                                 const FeatureDictionary& dict,
                                 double coverage_threshold) {
  FeatureCoverage c;
  c.k = net.k();
  alignments(net, dict, c.phi, c.lambda_max);
  c.threshold = coverage_threshold >= 0.0 ? coverage_threshold
                                          : threshold_from_phi(c.phi, net);
  c.learned.resize(c.phi.size());
  for (std::size_t f = 0; f < c.phi.size(); ++f) {
    c.learned[f] = c.phi[f] >= c.threshold;
  }
  return c;
}

std::string to_string(AssumptionMode mode) {
  return mode == AssumptionMode::AllFeatures ? "all_features" : "learned_only";
}

json AssumptionReport::to_json() const {
  return {{"mode", to_string(mode)},
          {"tol", tol},
          {"passed", passed},
          {"degenerate", degenerate},
          {"n_features", n_features},
          {"max_rel_deviation", max_rel_deviation},
          {"worst_pair", {worst_a, worst_b}}};
}

AssumptionReport check_assumption(const FeatureCoverage& coverage,
                                  AssumptionMode mode, double tol) {
  AssumptionReport r;
  r.mode = mode;
  r.tol = tol;
  std::vector<int> feats;
  for (int f = 0; f < 2 * coverage.k; ++f) {
    if (mode == AssumptionMode::AllFeatures || coverage.learned[f]) {
      feats.push_back(f);
    }
  }
  r.n_features = feats.size();
  r.degenerate = std::all_of(feats.begin(), feats.end(),
                             [&](int f) { return coverage.phi[f] == 0.0; });
  for (std::size_t a = 0; a < feats.size(); ++a) {
    for (std::size_t b = a + 1; b < feats.size(); ++b) {
      const double x = coverage.phi[feats[a]], y = coverage.phi[feats[b]];
      const double scale = std::max(x, y);
      const double dev = scale > 0.0 ? std::abs(x - y) / scale : 0.0;
      if (r.worst_a < 0 || dev > r.max_rel_deviation) {
        r.max_rel_deviation = dev;
        r.worst_a = feats[a];
        r.worst_b = feats[b];
      }
    }
  }
  r.passed = r.max_rel_deviation <= tol;
  return r;
}

AssumptionReport check_assumption(const Network& net,
                                  const FeatureDictionary& dict,
                                  AssumptionMode mode, double tol,
                                  double coverage_threshold) {
  return check_assumption(feature_coverage(net, dict, coverage_threshold),
                          mode, tol);
}

json TheoremVerdict::to_json() const {
  return {{"mu", mu},
          {"slack", slack},
          {"fnr_single", fnr_single},
          {"fnr_distill", fnr_distill},
          {"bound_single", bound_single},
          {"bound_distill", bound_distill},
          {"single_within_bound", single_within_bound},
          {"distill_within_bound", distill_within_bound},
          {"distill_not_worse", distill_not_worse}};
}

TheoremVerdict check_theorem_bounds(const ModelDiagnostics& single,
                                    const ModelDiagnostics& distill,
                                    double mu, double slack) {
  if (single.assumption.mode != AssumptionMode::LearnedOnly ||
      !single.assumption.passed) {
    throw AssumptionNotSatisfied(
        "single model did not pass the learned-features calibration check");
  }
  if (distill.assumption.mode != AssumptionMode::AllFeatures ||
      !distill.assumption.passed) {
    throw AssumptionNotSatisfied(
        "distilled model did not pass the all-features calibration check");
  }
  TheoremVerdict v;
  v.mu = mu;
  v.slack = slack;
  v.fnr_single = single.report.fnr;
  v.fnr_distill = distill.report.fnr;
  v.bound_single = 0.5 * (1.0 - mu) + slack;
  v.bound_distill = slack;
  v.single_within_bound = v.fnr_single <= v.bound_single;
  v.distill_within_bound = v.fnr_distill <= v.bound_distill;
  v.distill_not_worse = v.fnr_distill <= v.fnr_single;
  return v;
}

}  // namespace mvol
