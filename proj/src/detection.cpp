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

#include "mvol/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvol/errors.hpp"
#include "mvol/objectives.hpp"
#include "mvol/parallel.hpp"

namespace mvol {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::MaxLogit: return "maxlogit";
    case ScoreKind::MSP: return "msp";
    case ScoreKind::Energy: return "energy";
  }
  return "?";
}

ScoreKind parse_score(const std::string& name) {
  if (name == "maxlogit") return ScoreKind::MaxLogit;
  if (name == "msp") return ScoreKind::MSP;
  if (name == "energy") return ScoreKind::Energy;
  throw ConfigError("unknown score '" + name + "' (maxlogit, msp, energy)");
}

double maxlogit_from_logits(std::span<const double> logits) {
  return *std::max_element(logits.begin(), logits.end());
}

double msp_from_logits(std::span<const double> logits) {
  const auto q = softmax(logits);
  return *std::max_element(q.begin(), q.end());
}

double energy_from_logits(std::span<const double> logits) {
  return log_sum_exp(logits);
}

double score_from_logits(ScoreKind kind, std::span<const double> logits) {
  switch (kind) {
    case ScoreKind::MaxLogit: return maxlogit_from_logits(logits);
    case ScoreKind::MSP: return msp_from_logits(logits);
    case ScoreKind::Energy: return energy_from_logits(logits);
  }
  return 0.0;
}

double maxlogit_score(const Network& net, const PatchMatrix& X) {
  return maxlogit_from_logits(forward(net, X));
}
double msp_score(const Network& net, const PatchMatrix& X) {
  return msp_from_logits(forward(net, X));
}
double energy_score(const Network& net, const PatchMatrix& X) {
  return energy_from_logits(forward(net, X));
}

double choose_tau(std::span<const double> id_scores, double tpr_target) {
  if (id_scores.empty()) throw EmptyScores("choose_tau: no ID scores");
  if (!(tpr_target > 0.0 && tpr_target <= 1.0)) {
    throw ConfigError("tpr_target must lie in (0, 1]");
  }
  std::vector<double> s(id_scores.begin(), id_scores.end());
  std::sort(s.begin(), s.end());
  const auto n = s.size();
  // Guard against t * n landing a rounding error above an integer.
  auto need = static_cast<std::size_t>(
      std::ceil(tpr_target * static_cast<double>(n) - 1e-9));
  need = std::clamp<std::size_t>(need, 1, n);
  const double pivot = s[n - need];
  const auto lower = std::lower_bound(s.begin(), s.end(), pivot);
  if (lower == s.begin()) {
    return std::nextafter(pivot, -std::numeric_limits<double>::infinity());
  }
  return *(lower - 1);
}

std::vector<double> ScoredSet::id_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (is_id[i]) out.push_back(scores[i]);
  }
  return out;
}

std::vector<double> ScoredSet::ood_scores() const {
  std::vector<double> out;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_id[i]) out.push_back(scores[i]);
  }
  return out;
}

void ScoredSet::validate() const {
  if (scores.size() != is_id.size()) {
    throw ShapeMismatch("ScoredSet: scores and is_id lengths differ");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("ScoredSet: non-finite score");
  }
}

Eigen::MatrixXd dataset_logits(const Network& net, const Dataset& data,
                               int workers) {
  std::vector<const PatchMatrix*> xs;
  xs.reserve(data.size());
  for (const auto& s : data.samples) {
    if (s.X.d() != net.d()) throw ShapeMismatch("dataset/network dimension");
    xs.push_back(&s.X);
  }
  Eigen::MatrixXd out(net.k(), static_cast<Eigen::Index>(xs.size()));
  constexpr std::size_t kChunk = 512;
  const std::size_t chunks = (xs.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t start = c * kChunk;
    const std::size_t len = std::min(kChunk, xs.size() - start);
    out.middleCols(static_cast<Eigen::Index>(start),
                   static_cast<Eigen::Index>(len)) =
        forward_many(net, std::span(xs).subspan(start, len));
  });
  return out;
}

ScoredSet score_logits(const Eigen::MatrixXd& id_logits,
                       const Eigen::MatrixXd& ood_logits, ScoreKind kind) {
  ScoredSet set;
  set.score_name = to_string(kind);
  auto add = [&](const Eigen::MatrixXd& logits, bool is_id) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      std::span<const double> z(logits.data() + c * logits.rows(),
                                static_cast<std::size_t>(logits.rows()));
      set.scores.push_back(score_from_logits(kind, z));
      set.is_id.push_back(is_id);
    }
  };
  add(id_logits, true);
  add(ood_logits, false);
  set.validate();
  return set;
}

ScoredSet score_datasets(const Network& net, const Dataset& id,
                         const Dataset& ood, ScoreKind kind, int workers) {
  return score_logits(dataset_logits(net, id, workers),
                      dataset_logits(net, ood, workers), kind);
}

}  // namespace mvol
