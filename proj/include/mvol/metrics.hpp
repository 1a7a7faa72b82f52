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

// Detection metrics over a ScoredSet.

#pragma once

#include <string>

#include "json.hpp"
#include "mvol/datagen.hpp"
#include "mvol/detection.hpp"
#include "mvol/network.hpp"

namespace mvol {

struct FprResult {
  double fpr = 0.0;
  double tau = 0.0;
};

// tau = choose_tau(ID scores, t); fpr = fraction of OOD scores above tau.
// Throws MissingSplit when either split is empty.
FprResult fpr_at_tpr(const ScoredSet& scored, double tpr_target);

// Mann-Whitney statistic P(ID > OOD) + P(tie)/2 via average ranks.
double auroc(const ScoredSet& scored);

// Fraction of ID scores <= max OOD score + ood_margin.
double fnr_at_ood_sup(const ScoredSet& scored, double ood_margin = 0.0);

// Fraction of samples whose argmax logit (ties to the lowest index) equals
// the label. Throws MissingMetadata on an unlabeled sample.
double id_accuracy(const Network& net, const Dataset& data, int workers = 1);
double id_accuracy(const Eigen::MatrixXd& logits, const Dataset& data);

struct EvalReport {
  std::string score_name;
  double tpr_target = 0.95;
  double fpr_at_tpr = 0.0;
  double auroc = 0.0;
  double tau = 0.0;
  double ood_margin = 0.0;
  double fnr = 0.0;
  double id_accuracy = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
  static std::string csv_header();
  std::string csv_row() const;
};

EvalReport evaluate(const ScoredSet& scored, double tpr_target,
                    double ood_margin, double id_acc);

}  // namespace mvol
