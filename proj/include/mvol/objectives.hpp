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

// Training objectives and the SGD loop.
//
// Per OOD sample X with logits z and softmax q, the auxiliary loss terms are
//
//   OE:    Σ_i -(1/k) log q_i            ∂/∂z_i = q_i - 1/k
//   MVOL:  Σ_i -p_i log q_i              ∂/∂z_i = q_i Σ_j p_j - p_i
//
// with p_i = min(q'_i, ε) computed from the pre-step network and treated as a
// constant. p is not renormalized, so Σ_j p_j <= 1.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvol/datagen.hpp"
#include "mvol/network.hpp"

namespace mvol {

enum class Objective { CEOnly, OE, MVOL };
enum class RegimeKind { Single, EnsembleDistill, SelfDistill };

std::string to_string(Objective objective);
std::string to_string(RegimeKind regime);
Objective parse_objective(const std::string& name);
RegimeKind parse_regime(const std::string& name);

struct Regime {
  RegimeKind kind = RegimeKind::Single;
  int teachers = 10;  // EnsembleDistill only
  double temperature = 2.0;
  double ce_weight = 0.5;
  // Multiplies the soft-label gradient by T^2 so its magnitude does not
  // shrink as the temperature grows.
  bool t2_scaling = false;
};

// Network shape and activation. Zero lambda / sigma0 select the defaults
// 1/polylog(k) and 0.1/sqrt(d).
struct NetConfig {
  int m = 8;
  int q = 3;
  double lambda = 0.0;
  double sigma0 = 0.0;

  ActivationParams activation(int k) const;
  double init_scale(int d) const;
};

struct TrainPlan {
  Objective objective = Objective::MVOL;
  double beta = 0.5;
  double epsilon = 0.1;
  double eta = 0.05;
  double eta_prime = 0.05;
  int epochs = 60;
  std::vector<int> decay_epochs{30, 45};
  double decay_factor = 0.1;
  int batch_size_id = 64;
  int batch_size_ood = 64;
  Regime regime;
  NetConfig net;
  // Nesterov momentum 0.9 with weight decay 5e-4.
  bool momentum = false;
  std::uint64_t seed = 0;

  // epsilon default for k classes: 0.1 up to k = 10, 0.02 beyond.
  static double default_epsilon(int k);
  void validate() const;
};

using Batch = std::vector<const Sample*>;
// Per-ID-sample probability vectors over [k].
using SoftLabelSet = std::vector<std::vector<double>>;

Batch all_samples(const Dataset& data);

std::vector<double> softmax(std::span<const double> logits,
                            double temperature = 1.0);
double log_sum_exp(std::span<const double> logits);

double cross_entropy(std::span<const double> logits, int label);
// -Σ_i target_i log softmax_i(logits / temperature).
double soft_cross_entropy(std::span<const double> logits,
                          std::span<const double> target,
                          double temperature = 1.0);
double oe_term(std::span<const double> logits);
double mvol_term(std::span<const double> logits, std::span<const double> p);

// p_i = min(softmax_i(logits), epsilon).
std::vector<double> mvol_soft_labels_from_logits(std::span<const double> logits,
                                                 double epsilon);
std::vector<double> mvol_soft_labels(const Network& net_t, const PatchMatrix& X,
                                     double epsilon);

// Logit gradient of the per-sample loss term for `objective`:
//   CEOnly: q - target (target is the label distribution);
//   OE:     q - 1/k (target ignored);
//   MVOL:   q Σp - p with p = target, or p from `logits` and epsilon when
//           target is empty.
std::vector<double> loss_logit_grad(Objective objective,
                                    std::span<const double> logits,
                                    std::span<const double> target,
                                    double epsilon);

double ce_loss(const Network& net, const Batch& batch_id);
double oe_loss(const Network& net, const Batch& batch_id,
               const Batch& batch_ood, double beta);
double mvol_loss(const Network& net, const Network& net_t,
                 const Batch& batch_id, const Batch& batch_ood, double beta,
                 double epsilon);
// Loss of `plan.objective` with soft labels from `net` itself.
double batch_loss(const Network& net, const Batch& batch_id,
                  const Batch& batch_ood, const TrainPlan& plan);

struct StepRates {
  double eta;
  double eta_prime;
};

// One update: ID gradient at rate eta, OOD gradient at rate
// eta_prime * beta / |batch_ood|. Soft labels are frozen at `net`.
Network sgd_step(const Network& net, const Batch& batch_id,
                 const Batch& batch_ood, const TrainPlan& plan);
Network sgd_step(const Network& net, const Batch& batch_id,
                 const Batch& batch_ood, const TrainPlan& plan,
                 StepRates rates);

struct EpochStats {
  int epoch = 0;
  double id_loss = 0.0;
  double ood_loss = 0.0;
  double train_acc = 0.0;
  double maxlogit_mean_id = 0.0;
  double maxlogit_mean_ood = 0.0;
};

struct TrainResult {
  Network net;
  std::vector<EpochStats> trace;
};

inline constexpr const char* kTraceSchema =
    "mvol.trace.v1:epoch,id_loss,ood_loss,train_acc,maxlogit_mean_id,"
    "maxlogit_mean_ood";

// Minibatch SGD from a fresh initialization; all randomness is derived from
// plan.seed. Throws EmptyDataset when `id` is empty, or when `aux` is empty
// and the objective needs outliers.
TrainResult train(const Dataset& id, const Dataset& aux,
                  const TrainPlan& plan);

// Mean teacher softmax at the given temperature.
SoftLabelSet distill_labels(const std::vector<Network>& teachers,
                            const Dataset& id, double temperature,
                            int workers = 1);

// ID loss cw CE(one-hot) + (1 - cw) CE(soft, student / T), with cw and T
// from plan.regime. Throws MisalignedLabels when soft_labels does not match
// `id`.
TrainResult train_distilled(const Dataset& id, const Dataset& aux,
                            const SoftLabelSet& soft_labels,
                            const TrainPlan& plan);

struct RegimeResult {
  TrainResult final_model;
  std::vector<Network> teachers;  // empty for Single
};

// Teacher i trains with seed derive(plan.seed, "train/teacher", i), the
// student with derive(plan.seed, "train/student"). Teachers run on up to
// `workers` threads.
RegimeResult run_regime(const Dataset& id, const Dataset& aux,
                        const TrainPlan& plan, int workers = 1);

}  // namespace mvol
