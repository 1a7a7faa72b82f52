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
#include <limits>

#include "mvol/errors.hpp"
#include "mvol/metrics.hpp"

using namespace mvol;

namespace {

ScoredSet make_set(const std::vector<double>& id,
                   const std::vector<double>& ood) {
  ScoredSet s;
  s.score_name = "maxlogit";
  for (double v : id) {
    s.scores.push_back(v);
    s.is_id.push_back(true);
  }
  for (double v : ood) {
    s.scores.push_back(v);
    s.is_id.push_back(false);
  }
  return s;
}

double brute_auroc(const std::vector<double>& id,
                   const std::vector<double>& ood) {
  double wins = 0.0;
  for (double a : id) {
    for (double b : ood) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(id.size()) * ood.size());
}

// Enumerates every candidate threshold (each ID score, and the value just
// below the smallest), keeps the largest one whose TPR reaches t, and counts
// OOD scores strictly above it.
double brute_fpr(const std::vector<double>& id, const std::vector<double>& ood,
                 double t) {
  std::vector<double> cand = id;
  cand.push_back(std::nextafter(*std::min_element(id.begin(), id.end()),
                                -std::numeric_limits<double>::infinity()));
  double tau = -std::numeric_limits<double>::infinity();
  for (double c : cand) {
    double tp = 0.0;
    for (double s : id) tp += s > c;
    if (tp >= std::ceil(t * id.size() - 1e-9)) tau = std::max(tau, c);
  }
  double fp = 0.0;
  for (double s : ood) fp += s > tau;
  return fp / ood.size();
}

}  // namespace

TEST_CASE("FPR at 95% TPR worked example") {
  std::vector<double> id(100);
  for (int i = 0; i < 100; ++i) id[i] = i + 1.0;
  const auto r = fpr_at_tpr(make_set(id, {0.5, 50.5, 200.0}), 0.95);
  CHECK(r.tau == 5.0);
  CHECK(r.fpr == 2.0 / 3.0);
  CHECK(brute_fpr(id, {0.5, 50.5, 200.0}, 0.95) == 2.0 / 3.0);
}

TEST_CASE("FPR at TPR: separated sets and identical sets") {
  std::vector<double> id(200), ood(200);
  for (int i = 0; i < 200; ++i) {
    id[i] = 10.0 + i;
    ood[i] = i - 300.0;
  }
  CHECK(fpr_at_tpr(make_set(id, ood), 0.95).fpr == 0.0);
  const auto same = fpr_at_tpr(make_set(id, id), 0.95);
  CHECK(std::abs(same.fpr - 0.95) <= 1.0 / 200);
  CHECK_THROWS_AS(fpr_at_tpr(make_set(id, {}), 0.95), MissingSplit);
  CHECK_THROWS_AS(fpr_at_tpr(make_set({}, ood), 0.95), MissingSplit);
}

TEST_CASE("FPR at TPR equals brute-force threshold enumeration") {
  Rng rng(1);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> id(1 + rng.below(80)), ood(1 + rng.below(80));
    const double shift = rng.uniform(-1.0, 2.0);
    for (auto& v : id) v = std::round(4.0 * (rng.normal() + shift)) / 2.0;
    for (auto& v : ood) v = std::round(4.0 * rng.normal()) / 2.0;
    const double target = rng.uniform(0.05, 1.0);
    REQUIRE(fpr_at_tpr(make_set(id, ood), target).fpr ==
            doctest::Approx(brute_fpr(id, ood, target)).epsilon(1e-15));
  }
}

TEST_CASE("AUROC small cases") {
  CHECK(auroc(make_set({2, 3}, {1})) == 1.0);
  CHECK(auroc(make_set({1, 3}, {2})) == 0.5);
  CHECK(auroc(make_set({1, 1}, {1})) == 0.5);
  CHECK(auroc(make_set({0}, {1, 2})) == 0.0);
  CHECK_THROWS_AS(auroc(make_set({}, {1})), MissingSplit);
}

TEST_CASE("AUROC rank method equals the pairwise count") {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> id(1 + rng.below(200)), ood(1 + rng.below(200));
    const bool coarse = t % 2 == 0;
    for (auto& v : id) {
      v = rng.normal() + 0.7;
      if (coarse) v = std::round(3.0 * v);
    }
    for (auto& v : ood) {
      v = rng.normal();
      if (coarse) v = std::round(3.0 * v);
    }
    REQUIRE(std::abs(auroc(make_set(id, ood)) - brute_auroc(id, ood)) <= 1e-12);
  }
}

TEST_CASE("FNR at the OOD supremum") {
  CHECK(fnr_at_ood_sup(make_set({5, 6, 7}, {1, 2}), 0.0) == 0.0);
  CHECK(fnr_at_ood_sup(make_set({1, 2, 3, 4}, {2.5}), 0.0) == 0.5);
  // A tie with the supremum counts as a miss.
  CHECK(fnr_at_ood_sup(make_set({2.5, 4}, {2.5}), 0.0) == 0.5);
  Rng rng(3);
  std::vector<double> id(100), ood(50);
  for (auto& v : id) v = rng.normal() + 1.0;
  for (auto& v : ood) v = rng.normal();
  const auto s = make_set(id, ood);
  double prev = -1.0;
  for (double m = -2.0; m <= 3.0; m += 0.1) {
    const double f = fnr_at_ood_sup(s, m);
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("ID accuracy") {
  Rng drng(4);
  const auto cfg = GenConfig::defaults(2, 16, 8);
  const auto dict = make_feature_dictionary(2, 16, drng);
  Dataset ds = make_id_dataset(dict, cfg, 400, 5);
  // Balance the labels exactly.
  for (std::size_t n = 0; n < ds.size(); ++n) {
    ds.samples[n].label = static_cast<int>(n % 2);
  }
  const Network zero(2, 2, 16, {3, 0.25}, 0.1);
  CHECK(id_accuracy(zero, ds) == 0.5);
  Eigen::MatrixXd perfect = Eigen::MatrixXd::Zero(2, ds.size());
  for (std::size_t n = 0; n < ds.size(); ++n) {
    perfect(*ds.samples[n].label, n) = 1.0;
  }
  CHECK(id_accuracy(perfect, ds) == 1.0);
  Rng rng(6);
  const Network net = init_network(2, 2, 16, {3, 0.25}, 0.5, rng);
  const Dataset real = make_id_dataset(dict, cfg, 400, 7);
  int correct = 0;
  for (const auto& s : real.samples) {
    const auto F = forward(net, s.X);
    correct += (F[1] > F[0] ? 1 : 0) == *s.label;
  }
  CHECK(id_accuracy(net, real, 2) == doctest::Approx(correct / 400.0));
  Dataset unlabeled = real;
  unlabeled.samples[3].label.reset();
  CHECK_THROWS_AS(id_accuracy(net, unlabeled), MissingMetadata);
}

TEST_CASE("evaluation reports round-trip through JSON and CSV") {
  std::vector<double> id(100);
  for (int i = 0; i < 100; ++i) id[i] = i + 1.0;
  const auto rep = evaluate(make_set(id, {0.5, 50.5, 200.0}), 0.95, 0.0, 0.9);
  CHECK(rep.fpr_at_tpr == 2.0 / 3.0);
  CHECK(rep.n_id == 100);
  CHECK(rep.n_ood == 3);
  CHECK(rep.id_accuracy == 0.9);
  CHECK(rep.auroc >= 0.0);
  CHECK(rep.auroc <= 1.0);
  CHECK(rep.fnr == 1.0);
  const auto back = EvalReport::from_json(rep.to_json());
  CHECK(back.fpr_at_tpr == rep.fpr_at_tpr);
  CHECK(back.auroc == rep.auroc);
  CHECK(back.tau == rep.tau);
  CHECK(back.score_name == "maxlogit");
  const auto header = EvalReport::csv_header();
  const auto row = rep.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') ==
        std::count(row.begin(), row.end(), ','));
}
