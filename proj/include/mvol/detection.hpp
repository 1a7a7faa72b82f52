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

// OOD scores and the threshold detector: an input is declared ID iff its
// score is strictly above tau, so a score equal to tau is OOD.

#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mvol/datagen.hpp"
#include "mvol/network.hpp"

namespace mvol {

enum class ScoreKind { MaxLogit, MSP, Energy };

std::string to_string(ScoreKind kind);
ScoreKind parse_score(const std::string& name);

double maxlogit_from_logits(std::span<const double> logits);
double msp_from_logits(std::span<const double> logits);
// log Σ exp, with max subtraction.
double energy_from_logits(std::span<const double> logits);
double score_from_logits(ScoreKind kind, std::span<const double> logits);

double maxlogit_score(const Network& net, const PatchMatrix& X);
double msp_score(const Network& net, const PatchMatrix& X);
double energy_score(const Network& net, const PatchMatrix& X);

inline constexpr int kDetectOOD = 0;
inline constexpr int kDetectID = 1;

inline int detect(double score, double tau) {
  return score > tau ? kDetectID : kDetectOOD;
}

// Largest tau with at least ceil(t n) ID scores strictly above it, taken as
// the nearest score below the ceil(t n)-th largest; when no lower score
// exists, the next representable value below it. Throws EmptyScores or
// ConfigError (t outside (0, 1]).
double choose_tau(std::span<const double> id_scores, double tpr_target);

struct ScoredSet {
  std::vector<double> scores;
  std::vector<bool> is_id;
  std::string score_name;

  std::size_t size() const { return scores.size(); }
  std::vector<double> id_scores() const;
  std::vector<double> ood_scores() const;
  // Throws ShapeMismatch on length mismatch, NumericError on non-finite
  // scores.
  void validate() const;
};

// Logits of every sample as a k x n matrix.
Eigen::MatrixXd dataset_logits(const Network& net, const Dataset& data,
                               int workers = 1);

ScoredSet score_logits(const Eigen::MatrixXd& id_logits,
                       const Eigen::MatrixXd& ood_logits, ScoreKind kind);
ScoredSet score_datasets(const Network& net, const Dataset& id,
                         const Dataset& ood, ScoreKind kind, int workers = 1);

}  // namespace mvol
