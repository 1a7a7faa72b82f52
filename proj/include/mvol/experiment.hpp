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

// Config-driven experiment harness behind the `mvol` command line tool.
//
// One root seed feeds every random draw through named substreams:
//   gen/dict, gen/train_id, gen/aux, gen/test_id, gen/test_ood  data
//   train                                                    plan.seed
//   sweep/seed/<s>                                           sweep trial s
// Worker counts never enter a stream, so every artifact is independent of
// scheduling.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvol/datagen.hpp"
#include "mvol/detection.hpp"
#include "mvol/diagnostics.hpp"
#include "mvol/metrics.hpp"
#include "mvol/objectives.hpp"

namespace mvol {

inline constexpr const char* kToolVersion = "0.1.0";

struct DataSizes {
  std::size_t n_train = 5000;
  std::size_t n_aux = 5000;
  std::size_t n_test_id = 2000;
  std::size_t n_test_ood = 2000;
  // Fraction of unlabeled ID samples mixed into the auxiliary set.
  double alpha = 0.0;
};

struct EvalConfig {
  double tpr_target = 0.95;
  double ood_margin = 0.0;
  std::vector<ScoreKind> scores{ScoreKind::MaxLogit, ScoreKind::MSP,
                                ScoreKind::Energy};
  double assumption_tol = 0.1;
  // Negative selects default_coverage_threshold.
  double coverage_threshold = -1.0;
};

enum class SweepAxis { Alpha, Epsilon, Mu };
std::string to_string(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

struct SweepConfig {
  SweepAxis axis = SweepAxis::Alpha;
  std::vector<double> values;
  int seeds = 5;
  std::vector<Objective> objectives{Objective::OE, Objective::MVOL};
};

struct ExperimentConfig {
  GenConfig gen = GenConfig::defaults();
  DataSizes data;
  TrainPlan plan;
  EvalConfig eval;
  std::optional<SweepConfig> sweep;
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;

  // Unknown keys anywhere are ConfigErrors. A missing plan.epsilon takes
  // TrainPlan::default_epsilon(gen.k).
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  // Sets the swept parameter; throws ConfigError when out of range.
  void apply_axis(SweepAxis axis, double value);
  // FNV-1a of the canonical JSON dump, without output_dir.
  std::string hash() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

struct ExperimentData {
  FeatureDictionary dict;
  Dataset train_id;
  Dataset aux;
  Dataset test_id;
  Dataset test_ood;
};

ExperimentData generate_data(const ExperimentConfig& cfg, int workers = 1);

struct ModelEvaluation {
  std::vector<EvalReport> reports;  // one per cfg.eval.scores entry
  FeatureCoverage coverage;
  AssumptionReport assumption_all;
  AssumptionReport assumption_learned;
  Eigen::MatrixXd id_logits;
  Eigen::MatrixXd ood_logits;

  const EvalReport& report(ScoreKind kind) const;
  nlohmann::json diagnostics_json() const;
};

ModelEvaluation evaluate_model(const Network& net, const ExperimentData& data,
                               const EvalConfig& eval, int workers = 1);

// Trains cfg.plan (seed derived from cfg.seed) on the generated data.
RegimeResult train_experiment(const ExperimentConfig& cfg,
                              const ExperimentData& data, int workers = 1);

struct SweepRow {
  SweepAxis axis = SweepAxis::Alpha;
  double value = 0.0;
  int seed_index = 0;
  std::uint64_t seed = 0;
  Objective objective = Objective::MVOL;
  EvalReport report;
};

struct SweepSummaryRow {
  SweepAxis axis = SweepAxis::Alpha;
  double value = 0.0;
  Objective objective = Objective::MVOL;
  std::string score;
  std::size_t n = 0;
  double fpr_mean = 0.0, fpr_std = 0.0;
  double auroc_mean = 0.0, auroc_std = 0.0;
  double fnr_mean = 0.0, fnr_std = 0.0;
  double acc_mean = 0.0, acc_std = 0.0;
};

inline constexpr const char* kSweepSchema = "mvol.sweep.v1";
inline constexpr const char* kSweepSummarySchema = "mvol.sweep_summary.v1";
inline constexpr const char* kEvalSchema = "mvol.eval.v1";
inline constexpr const char* kLogitSchema = "mvol.logits.v1";

// Rows ordered by (value, seed, objective, score). Trials run on up to
// `workers` threads.
std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, int workers = 1);
// Means and sample standard deviations per (value, objective, score), in
// first-appearance order.
std::vector<SweepSummaryRow> summarize_sweep(const std::vector<SweepRow>& rows);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_summary_csv(const std::vector<SweepSummaryRow>& rows);
std::vector<SweepRow> parse_sweep_csv(std::string_view text);

// Score-import format: a header `split,logit_0,...,logit_{k-1}`, then one
// row per sample with split in {id, ood}. Lines starting with '#' are
// comments.
std::string logits_csv(const Eigen::MatrixXd& id_logits,
                       const Eigen::MatrixXd& ood_logits);
void parse_logits_csv(std::string_view text, Eigen::MatrixXd& id_logits,
                      Eigen::MatrixXd& ood_logits);
// One report per score; id_accuracy is NaN since the format has no labels.
std::vector<EvalReport> evaluate_logits(const Eigen::MatrixXd& id_logits,
                                        const Eigen::MatrixXd& ood_logits,
                                        const EvalConfig& eval);

struct ArtifactEntry {
  std::string path;  // relative to the output directory
  std::string checksum;
};

struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_seconds = 0.0;
  std::string started_at;
  std::string output_dir;
  nlohmann::json config;
  nlohmann::json args = nlohmann::json::object();
  std::vector<ArtifactEntry> artifacts;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kManifestName = "manifest.json";

// Each command writes its artifacts and a manifest into cfg.output_dir.
RunManifest cmd_generate(const ExperimentConfig& cfg, int workers = 1);
RunManifest cmd_train(const ExperimentConfig& cfg, int workers = 1);
RunManifest cmd_eval(const ExperimentConfig& cfg, int workers = 1);
RunManifest cmd_sweep(const ExperimentConfig& cfg, int workers = 1);
RunManifest cmd_score_import(const ExperimentConfig& cfg,
                             const std::filesystem::path& csv_path);

struct ReplayResult {
  std::filesystem::path replay_dir;
  std::vector<std::string> matched;
  std::vector<std::string> mismatched;  // includes artifacts missing on replay
  bool identical() const { return mismatched.empty(); }
};

// Re-runs the manifest's command into `replay_dir` (default: the original
// output directory with suffix ".replay") and compares artifact checksums.
ReplayResult cmd_replay(const std::filesystem::path& manifest_path,
                        int workers = 1,
                        std::optional<std::filesystem::path> replay_dir = {});

}  // namespace mvol
