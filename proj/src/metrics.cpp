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

#include "mvol/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "mvol/errors.hpp"
#include "mvol/io.hpp"

namespace mvol {

namespace {

void require_splits(const ScoredSet& scored, const char* who) {
  scored.validate();
  bool has_id = false, has_ood = false;
  for (bool b : scored.is_id) (b ? has_id : has_ood) = true;
  if (!has_id) throw MissingSplit(std::string(who) + ": no ID scores");
  if (!has_ood) throw MissingSplit(std::string(who) + ": no OOD scores");
}

}  // namespace

FprResult fpr_at_tpr(const ScoredSet& scored, double tpr_target) {
  require_splits(scored, "fpr_at_tpr");
  const double tau = choose_tau(scored.id_scores(), tpr_target);
  const auto ood = scored.ood_scores();
  std::size_t accepted = 0;
  for (double s : ood) accepted += detect(s, tau) == kDetectID;
  return {static_cast<double>(accepted) / static_cast<double>(ood.size()),
          tau};
}

double auroc(const ScoredSet& scored) {
  require_splits(scored, "auroc");
  const std::size_t n = scored.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scored.scores[a] < scored.scores[b];
  });
  // Ranks are 1-based; a tie group shares the mean of its ranks.
  double id_rank_sum = 0.0;
  std::size_t n_id = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scored.scores[order[j]] == scored.scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (scored.is_id[order[t]]) {
        id_rank_sum += rank;
        ++n_id;
      }
    }
    i = j;
  }
  const double nid = static_cast<double>(n_id);
  const double nood = static_cast<double>(n - n_id);
  const double u = id_rank_sum - nid * (nid + 1.0) / 2.0;
  return u / (nid * nood);
}

double fnr_at_ood_sup(const ScoredSet& scored, double ood_margin) {
  require_splits(scored, "fnr_at_ood_sup");
  const auto ood = scored.ood_scores();
  const double tau = *std::max_element(ood.begin(), ood.end()) + ood_margin;
  const auto id = scored.id_scores();
  std::size_t rejected = 0;
  for (double s : id) rejected += detect(s, tau) == kDetectOOD;
  return static_cast<double>(rejected) / static_cast<double>(id.size());
}

double id_accuracy(const Eigen::MatrixXd& logits, const Dataset& data) {
  if (static_cast<std::size_t>(logits.cols()) != data.size()) {
    throw ShapeMismatch("id_accuracy: logits/dataset size");
  }
  if (data.empty()) throw EmptyDataset("id_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto& label = data.samples[n].label;
    if (!label) throw MissingMetadata("id_accuracy: unlabeled sample");
    Eigen::Index best = 0;
    const auto col = static_cast<Eigen::Index>(n);
    for (Eigen::Index i = 1; i < logits.rows(); ++i) {
      if (logits(i, col) > logits(best, col)) best = i;
    }
    correct += best == *label;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double id_accuracy(const Network& net, const Dataset& data, int workers) {
  return id_accuracy(dataset_logits(net, data, workers), data);
}

nlohmann::json EvalReport::to_json() const {
  return {{"score", score_name},     {"tpr_target", tpr_target},
          {"fpr_at_tpr", fpr_at_tpr}, {"auroc", auroc},
          {"tau", tau},               {"ood_margin", ood_margin},
          {"fnr", fnr},               {"id_accuracy", id_accuracy},
          {"n_id", n_id},             {"n_ood", n_ood}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.score_name = j.at("score").get<std::string>();
  r.tpr_target = j.at("tpr_target").get<double>();
  r.fpr_at_tpr = j.at("fpr_at_tpr").get<double>();
  r.auroc = j.at("auroc").get<double>();
  r.tau = j.at("tau").get<double>();
  r.ood_margin = j.at("ood_margin").get<double>();
  r.fnr = j.at("fnr").get<double>();
  // JSON has no NaN; an unlabeled report writes null.
  const auto& acc = j.at("id_accuracy");
  r.id_accuracy = acc.is_null() ? std::numeric_limits<double>::quiet_NaN()
                                : acc.get<double>();
  r.n_id = j.at("n_id").get<std::size_t>();
  r.n_ood = j.at("n_ood").get<std::size_t>();
  return r;
}

std::string EvalReport::csv_header() {
  return "score,tpr_target,fpr_at_tpr,auroc,tau,ood_margin,fnr,id_accuracy,"
         "n_id,n_ood";
}

std::string EvalReport::csv_row() const {
  return score_name + "," + format_double(tpr_target) + "," +
         format_double(fpr_at_tpr) + "," + format_double(auroc) + "," +
         format_double(tau) + "," + format_double(ood_margin) + "," +
         format_double(fnr) + "," + format_double(id_accuracy) + "," +
         std::to_string(n_id) + "," + std::to_string(n_ood);
}

EvalReport evaluate(const ScoredSet& scored, double tpr_target,
                    double ood_margin, double id_acc) {
  EvalReport r;
  r.score_name = scored.score_name;
  r.tpr_target = tpr_target;
  const auto fpr = fpr_at_tpr(scored, tpr_target);
  r.fpr_at_tpr = fpr.fpr;
  r.tau = fpr.tau;
  r.auroc = auroc(scored);
  r.ood_margin = ood_margin;
  r.fnr = fnr_at_ood_sup(scored, ood_margin);
  r.id_accuracy = id_acc;
  for (bool b : scored.is_id) (b ? r.n_id : r.n_ood) += 1;
  return r;
}

}  // namespace mvol
