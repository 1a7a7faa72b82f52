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

// Configurations shared by the unit tests and the acceptance binary. The
// thought-experiment preset mirrors configs/thought_experiment.json.

#pragma once

#include "mvol/datagen.hpp"
#include "mvol/objectives.hpp"

namespace mvol::testing {

// Two classes, two features each; main features weigh 1 and minor ones 0.1,
// one patch per feature.
inline GenConfig thought_experiment_gen() {
  GenConfig g = GenConfig::defaults(2, 256, 8);
  g.C_p = 1;
  g.s = 1.0;
  g.mu = 0.8;
  g.mv_main = {1.0, 1.0};
  g.sv_main = {1.0, 1.0};
  g.rho = 0.0;
  g.gamma_sv = 0.1;
  g.mv_minor = {0.1, 0.1};
  g.gamma = 0.0;
  // Feature patches nearly clean; the rest carry enough noise to make the
  // leftover single-view samples memorizable.
  g.sigma_p = 0.002;
  g.offpatch_noise_scale = 0.0625;
  return g;
}

inline TrainPlan thought_experiment_plan() {
  TrainPlan p;
  p.objective = Objective::CEOnly;
  p.epochs = 60;
  p.decay_epochs = {30};
  p.decay_factor = 0.1;
  p.eta = p.eta_prime = 8.0;
  p.batch_size_id = 32;
  p.net.m = 4;
  p.net.q = 8;
  p.net.lambda = 0.5;
  p.net.sigma0 = 0.12;
  p.regime.kind = RegimeKind::EnsembleDistill;
  p.regime.teachers = 10;
  p.regime.temperature = 4.0;
  p.regime.ce_weight = 0.0;
  p.regime.t2_scaling = true;
  return p;
}

inline constexpr std::size_t kThoughtExperimentN = 200;

}  // namespace mvol::testing
