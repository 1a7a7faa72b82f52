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

// mvol: generate, train, eval, sweep, score-import, replay.
//
// Exit codes: 0 success, 1 replay mismatch or unexpected failure,
// 2 configuration error, 3 I/O error, 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mvol/errors.hpp"
#include "mvol/experiment.hpp"

namespace {

constexpr int kExitMismatch = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string out;
  std::string input;
  std::string manifest;
};

mvol::ExperimentConfig resolve_config(const Options& o) {
  mvol::ExperimentConfig cfg;
  if (!o.config.empty()) {
    cfg = mvol::load_config(o.config);
  } else {
    cfg.plan.epsilon = mvol::TrainPlan::default_epsilon(cfg.gen.k);
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  cfg.validate();
  return cfg;
}

void print_manifest(const mvol::RunManifest& m) {
  std::cout << m.command << ": " << m.artifacts.size() << " artifacts in "
            << m.output_dir << " (" << m.wall_clock_seconds << " s)\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-view outlier learning experiments"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Experiment config (JSON)");
    sub->add_option("--seed", o.seed, "Override the root seed");
    sub->add_option("--workers", o.workers, "Worker threads")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Override the output directory");
  };
  auto* gen = app.add_subcommand("generate", "Generate and write datasets");
  auto* train = app.add_subcommand("train", "Train per the config's plan");
  auto* eval = app.add_subcommand("eval", "Evaluate the trained checkpoint");
  auto* sweep = app.add_subcommand("sweep", "Run the config's sweep");
  auto* import =
      app.add_subcommand("score-import", "Evaluate externally produced logits");
  auto* replay = app.add_subcommand("replay", "Re-run a manifest and compare");
  for (auto* sub : {gen, train, eval, sweep, import}) add_common(sub);
  import->add_option("input", o.input, "CSV: split,logit_0,...")->required();
  replay->add_option("manifest", o.manifest, "manifest.json of a run")
      ->required();
  replay->add_option("--workers", o.workers, "Worker threads")
      ->check(CLI::PositiveNumber);
  replay->add_option("--out", o.out, "Replay directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*replay) {
    std::optional<std::filesystem::path> dir;
    if (!o.out.empty()) dir = o.out;
    const auto r = mvol::cmd_replay(o.manifest, o.workers, dir);
    for (const auto& p : r.mismatched) std::cout << "MISMATCH " << p << "\n";
    std::cout << "replay: " << r.matched.size() << " identical, "
              << r.mismatched.size() << " differing, in "
              << r.replay_dir.string() << "\n";
    return r.identical() ? 0 : kExitMismatch;
  }
  const auto cfg = resolve_config(o);
  if (*gen) print_manifest(mvol::cmd_generate(cfg, o.workers));
  if (*train) print_manifest(mvol::cmd_train(cfg, o.workers));
  if (*eval) print_manifest(mvol::cmd_eval(cfg, o.workers));
  if (*sweep) print_manifest(mvol::cmd_sweep(cfg, o.workers));
  if (*import) print_manifest(mvol::cmd_score_import(cfg, o.input));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mvol::ConfigErrorBase& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mvol::IoErrorBase& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const mvol::NumericErrorBase& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMismatch;
  }
}
