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

#include "mvol/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "mvol/errors.hpp"
#include "mvol/parallel.hpp"

namespace mvol {

std::string to_string(Objective objective) {
  switch (objective) {
    case Objective::CEOnly: return "ce";
    case Objective::OE: return "oe";
    case Objective::MVOL: return "mvol";
  }
  return "?";
}

std::string to_string(RegimeKind regime) {
  switch (regime) {
    case RegimeKind::Single: return "single";
    case RegimeKind::EnsembleDistill: return "ensemble_distill";
    case RegimeKind::SelfDistill: return "self_distill";
  }
  return "?";
}

Objective parse_objective(const std::string& name) {
  if (name == "ce") return Objective::CEOnly;
  if (name == "oe") return Objective::OE;
  if (name == "mvol") return Objective::MVOL;
  throw ConfigError("unknown objective '" + name + "' (ce, oe, mvol)");
}

RegimeKind parse_regime(const std::string& name) {
  if (name == "single") return RegimeKind::Single;
  if (name == "ensemble_distill") return RegimeKind::EnsembleDistill;
  if (name == "self_distill") return RegimeKind::SelfDistill;
  throw ConfigError("unknown regime '" + name +
                    "' (single, ensemble_distill, self_distill)");
}

ActivationParams NetConfig::activation(int k) const {
  ActivationParams act{q, lambda > 0.0 ? lambda : 1.0 / polylog(k)};
  act.validate();
  return act;
}

double NetConfig::init_scale(int d) const {
  return sigma0 > 0.0 ? sigma0 : 0.1 / std::sqrt(static_cast<double>(d));
}

double TrainPlan::default_epsilon(int k) { return k <= 10 ? 0.1 : 0.02; }

void TrainPlan::validate() const {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw ConfigError("epsilon must lie in (0, 1)");
  }
  if (!(eta > 0.0) || !(eta_prime > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size_id < 1 || batch_size_ood < 1) {
    throw ConfigError("batch sizes must be >= 1");
  }
  if (!(decay_factor > 0.0)) throw ConfigError("decay_factor must be > 0");
  if (regime.teachers < 1) throw ConfigError("teachers must be >= 1");
  if (!(regime.temperature > 0.0)) {
    throw ConfigError("temperature must be > 0");
  }
  if (!(regime.ce_weight >= 0.0 && regime.ce_weight <= 1.0)) {
    throw ConfigError("ce_weight must lie in [0, 1]");
  }
  if (net.m < 1) throw ConfigError("net.m must be >= 1");
  if (net.q < 2) throw ConfigError("net.q must be >= 2");
  if (net.lambda < 0.0 || net.sigma0 < 0.0) {
    throw ConfigError("net.lambda and net.sigma0 must be >= 0 (0 = default)");
  }
}

Batch all_samples(const Dataset& data) {
  Batch out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(&s);
  return out;
}

std::vector<double> softmax(std::span<const double> logits,
                            double temperature) {
  std::vector<double> q(logits.size());
  if (logits.empty()) return q;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    q[i] = std::exp((logits[i] - mx) / temperature);
    sum += q[i];
  }
  for (auto& v : q) v /= sum;
  return q;
}

double log_sum_exp(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  return mx + std::log(sum);
}

namespace {

// log softmax_i(z / T) for all i.
std::vector<double> log_softmax(std::span<const double> z, double t) {
  std::vector<double> scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / t;
  const double lse = log_sum_exp(scaled);
  for (auto& v : scaled) v -= lse;
  return scaled;
}

}  // namespace

double cross_entropy(std::span<const double> logits, int label) {
  return log_sum_exp(logits) - logits[label];
}

double soft_cross_entropy(std::span<const double> logits,
                          std::span<const double> target,
                          double temperature) {
  const auto ls = log_softmax(logits, temperature);
  double loss = 0.0;
  for (std::size_t i = 0; i < ls.size(); ++i) loss -= target[i] * ls[i];
  return loss;
}

double oe_term(std::span<const double> logits) {
  const auto ls = log_softmax(logits, 1.0);
  const double k = static_cast<double>(logits.size());
  double loss = 0.0;
  for (double v : ls) loss -= v / k;
  return loss;
}

double mvol_term(std::span<const double> logits, std::span<const double> p) {
  return soft_cross_entropy(logits, p, 1.0);
}

std::vector<double> mvol_soft_labels_from_logits(std::span<const double> logits,
                                                 double epsilon) {
  auto p = softmax(logits);
  for (auto& v : p) v = std::min(v, epsilon);
  return p;
}

std::vector<double> mvol_soft_labels(const Network& net_t, const PatchMatrix& X,
                                     double epsilon) {
  return mvol_soft_labels_from_logits(forward(net_t, X), epsilon);
}

std::vector<double> loss_logit_grad(Objective objective,
                                    std::span<const double> logits,
                                    std::span<const double> target,
                                    double epsilon) {
  auto g = softmax(logits);
  const std::size_t k = g.size();
  switch (objective) {
    case Objective::CEOnly:
      if (target.size() != k) throw ShapeMismatch("CE target length");
      for (std::size_t i = 0; i < k; ++i) g[i] -= target[i];
      break;
    case Objective::OE:
      for (auto& v : g) v -= 1.0 / static_cast<double>(k);
      break;
    case Objective::MVOL: {
      std::vector<double> own;
      if (target.empty()) {
        own = mvol_soft_labels_from_logits(logits, epsilon);
        target = own;
      }
      if (target.size() != k) throw ShapeMismatch("MVOL target length");
      // For the self label, Σp = 1 − Σ clipped mass. Summing the clipped
      // mass keeps the unclipped case at exactly 1 (and the gradient at
      // exactly 0) instead of inheriting the softmax's rounding.
      double sum_p = 0.0;
      if (!own.empty()) {
        double clipped = 0.0;
        for (std::size_t i = 0; i < k; ++i) clipped += g[i] - own[i];
        sum_p = 1.0 - clipped;
      } else {
        for (double p : target) sum_p += p;
      }
      for (std::size_t i = 0; i < k; ++i) g[i] = g[i] * sum_p - target[i];
      break;
    }
  }
  return g;
}

namespace {

int label_of(const Sample& s) {
  if (!s.label) throw MissingMetadata("ID sample without a label");
  return *s.label;
}

std::vector<const PatchMatrix*> inputs_of(const Batch& batch) {
  std::vector<const PatchMatrix*> xs;
  xs.reserve(batch.size());
  for (const auto* s : batch) xs.push_back(&s->X);
  return xs;
}

std::span<const double> column(const Eigen::MatrixXd& m, Eigen::Index c) {
  return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}

double ood_term(Objective objective, std::span<const double> z,
                std::span<const double> p_source, double epsilon) {
  if (objective == Objective::OE) return oe_term(z);
  return mvol_term(z, mvol_soft_labels_from_logits(p_source, epsilon));
}

int argmax(std::span<const double> z) {
  int best = 0;
  for (std::size_t i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) best = static_cast<int>(i);
  }
  return best;
}

double max_of(std::span<const double> z) {
  return *std::max_element(z.begin(), z.end());
}

bool uses_ood(const TrainPlan& plan) {
  return plan.objective != Objective::CEOnly;
}

}  // namespace

double ce_loss(const Network& net, const Batch& batch_id) {
  if (batch_id.empty()) throw EmptyDataset("ce_loss: empty ID batch");
  const auto xs = inputs_of(batch_id);
  const auto logits = forward_many(net, xs);
  double sum = 0.0;
  for (std::size_t b = 0; b < batch_id.size(); ++b) {
    sum += cross_entropy(column(logits, b), label_of(*batch_id[b]));
  }
  return sum / static_cast<double>(batch_id.size());
}

double oe_loss(const Network& net, const Batch& batch_id,
               const Batch& batch_ood, double beta) {
  if (batch_ood.empty()) throw EmptyDataset("oe_loss: empty OOD batch");
  const double id = ce_loss(net, batch_id);
  const auto logits = forward_many(net, inputs_of(batch_ood));
  double sum = 0.0;
  for (std::size_t b = 0; b < batch_ood.size(); ++b) {
    sum += oe_term(column(logits, b));
  }
  return id + beta * sum / static_cast<double>(batch_ood.size());
}

double mvol_loss(const Network& net, const Network& net_t,
                 const Batch& batch_id, const Batch& batch_ood, double beta,
                 double epsilon) {
  if (batch_ood.empty()) throw EmptyDataset("mvol_loss: empty OOD batch");
  const double id = ce_loss(net, batch_id);
  const auto xs = inputs_of(batch_ood);
  const auto logits = forward_many(net, xs);
  const auto logits_t = forward_many(net_t, xs);
  double sum = 0.0;
  for (std::size_t b = 0; b < batch_ood.size(); ++b) {
    sum += ood_term(Objective::MVOL, column(logits, b), column(logits_t, b),
                    epsilon);
  }
  return id + beta * sum / static_cast<double>(batch_ood.size());
}

double batch_loss(const Network& net, const Batch& batch_id,
                  const Batch& batch_ood, const TrainPlan& plan) {
  switch (plan.objective) {
    case Objective::CEOnly: return ce_loss(net, batch_id);
    case Objective::OE: return oe_loss(net, batch_id, batch_ood, plan.beta);
    case Objective::MVOL:
      return mvol_loss(net, net, batch_id, batch_ood, plan.beta, plan.epsilon);
  }
  return 0.0;
}

namespace {

inline constexpr double kMomentum = 0.9;
inline constexpr double kWeightDecay = 5e-4;

struct StepStats {
  double id_loss = 0.0;
  double ood_loss = 0.0;
  int correct = 0;
  double maxlogit_id = 0.0;
  double maxlogit_ood = 0.0;
};

// Reusable buffers of one training run.
struct StepWorkspace {
  BatchPass pass_id;
  BatchPass pass_ood;
  std::vector<double> grad_id;
  std::vector<double> grad_ood;
  std::vector<double> velocity;
};

// Updates `net` in place. `soft` is either null or parallel to batch_id.
StepStats step_in_place(Network& net, const Batch& batch_id,
                        const std::vector<const std::vector<double>*>* soft,
                        const Batch& batch_ood, const TrainPlan& plan,
                        StepRates rates, StepWorkspace& ws) {
  StepStats stats;
  const int k = net.k();
  const auto n_w = net.weights().size();
  std::vector<double> delta(n_w, 0.0);

  if (!batch_id.empty()) {
    const auto xs = inputs_of(batch_id);
    const auto& logits = ws.pass_id.run(net, xs);
    const auto B = static_cast<Eigen::Index>(batch_id.size());
    Eigen::MatrixXd coef(k, B);
    const double T = plan.regime.temperature;
    const double cw = plan.regime.ce_weight;
    const double soft_scale = plan.regime.t2_scaling ? T * T : 1.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const auto z = column(logits, b);
      const int y = label_of(*batch_id[b]);
      auto q = softmax(z);
      std::vector<double> g(k);
      for (int i = 0; i < k; ++i) g[i] = q[i] - (i == y ? 1.0 : 0.0);
      double loss = cross_entropy(z, y);
      if (soft != nullptr) {
        const auto& t = *(*soft)[b];
        const auto qt = softmax(z, T);
        for (int i = 0; i < k; ++i) {
          g[i] = cw * g[i] + (1.0 - cw) * soft_scale * (qt[i] - t[i]) / T;
        }
        loss = cw * loss +
               (1.0 - cw) * soft_scale * soft_cross_entropy(z, t, T);
      }
      for (int i = 0; i < k; ++i) coef(i, b) = g[i] / static_cast<double>(B);
      stats.id_loss += loss;
      if (argmax(z) == y) ++stats.correct;
      stats.maxlogit_id += max_of(z);
    }
    ws.pass_id.weight_gradient(coef, ws.grad_id);
    for (std::size_t w = 0; w < n_w; ++w) delta[w] = rates.eta * ws.grad_id[w];
  }

  if (uses_ood(plan) && !batch_ood.empty()) {
    const auto xs = inputs_of(batch_ood);
    const auto& logits = ws.pass_ood.run(net, xs);
    const auto M = static_cast<Eigen::Index>(batch_ood.size());
    Eigen::MatrixXd coef(k, M);
    for (Eigen::Index b = 0; b < M; ++b) {
      const auto z = column(logits, b);
      const auto g = loss_logit_grad(plan.objective, z, {}, plan.epsilon);
      for (int i = 0; i < k; ++i) coef(i, b) = g[i];
      stats.ood_loss += ood_term(plan.objective, z, z, plan.epsilon);
      stats.maxlogit_ood += max_of(z);
    }
    if (plan.beta != 0.0) {
      ws.pass_ood.weight_gradient(coef, ws.grad_ood);
      const double rate =
          rates.eta_prime * plan.beta / static_cast<double>(M);
      for (std::size_t w = 0; w < n_w; ++w) delta[w] += rate * ws.grad_ood[w];
    }
  }

  auto& weights = net.weights();
  if (plan.momentum) {
    if (ws.velocity.size() != n_w) ws.velocity.assign(n_w, 0.0);
    for (std::size_t w = 0; w < n_w; ++w) {
      const double g = delta[w] + rates.eta * kWeightDecay * weights[w];
      ws.velocity[w] = kMomentum * ws.velocity[w] + g;
      weights[w] -= g + kMomentum * ws.velocity[w];
    }
  } else {
    for (std::size_t w = 0; w < n_w; ++w) weights[w] -= delta[w];
  }
  return stats;
}

}  // namespace

Network sgd_step(const Network& net, const Batch& batch_id,
                 const Batch& batch_ood, const TrainPlan& plan) {
  return sgd_step(net, batch_id, batch_ood, plan, {plan.eta, plan.eta_prime});
}

Network sgd_step(const Network& net, const Batch& batch_id,
                 const Batch& batch_ood, const TrainPlan& plan,
                 StepRates rates) {
  Network out = net;
  StepWorkspace ws;
  TrainPlan single = plan;
  single.momentum = false;
  step_in_place(out, batch_id, nullptr, batch_ood, single, rates, ws);
  return out;
}

namespace {

TrainResult train_impl(const Dataset& id, const Dataset& aux,
                       const SoftLabelSet* soft, const TrainPlan& plan) {
  plan.validate();
  if (id.empty()) throw EmptyDataset("train: empty ID training set");
  if (uses_ood(plan) && aux.empty()) {
    throw EmptyDataset("train: objective " + to_string(plan.objective) +
                       " needs auxiliary outliers");
  }
  const int k = id.gen_config.k;
  const int d = id.samples.front().X.d();
  Rng init_rng = Rng::derive(plan.seed, "train/init");
  TrainResult result{init_network(k, plan.net.m, d, plan.net.activation(k),
                                  plan.net.init_scale(d), init_rng),
                     {}};
  Network& net = result.net;

  std::vector<std::size_t> id_order(id.size());
  std::vector<std::size_t> ood_order(aux.size());
  for (std::size_t i = 0; i < id_order.size(); ++i) id_order[i] = i;
  for (std::size_t i = 0; i < ood_order.size(); ++i) ood_order[i] = i;

  const auto B = static_cast<std::size_t>(plan.batch_size_id);
  const auto M = static_cast<std::size_t>(plan.batch_size_ood);
  StepWorkspace ws;
  Batch batch_id, batch_ood;
  std::vector<const std::vector<double>*> batch_soft;

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    double scale = 1.0;
    for (int milestone : plan.decay_epochs) {
      if (epoch >= milestone) scale *= plan.decay_factor;
    }
    const StepRates rates{plan.eta * scale, plan.eta_prime * scale};
    Rng::derive(plan.seed, "train/shuffle/id", epoch).shuffle(id_order);
    if (!ood_order.empty()) {
      Rng::derive(plan.seed, "train/shuffle/ood", epoch).shuffle(ood_order);
    }

    EpochStats epoch_stats;
    epoch_stats.epoch = epoch;
    std::size_t n_id = 0, n_ood = 0, ood_cursor = 0;
    for (std::size_t start = 0; start < id_order.size(); start += B) {
      const std::size_t end = std::min(id_order.size(), start + B);
      batch_id.clear();
      batch_soft.clear();
      for (std::size_t j = start; j < end; ++j) {
        batch_id.push_back(&id.samples[id_order[j]]);
        if (soft != nullptr) batch_soft.push_back(&(*soft)[id_order[j]]);
      }
      batch_ood.clear();
      if (uses_ood(plan)) {
        for (std::size_t j = 0; j < M; ++j) {
          batch_ood.push_back(&aux.samples[ood_order[ood_cursor]]);
          ood_cursor = (ood_cursor + 1) % ood_order.size();
        }
      }
      const auto stats =
          step_in_place(net, batch_id, soft ? &batch_soft : nullptr,
                        batch_ood, plan, rates, ws);
      epoch_stats.id_loss += stats.id_loss;
      epoch_stats.ood_loss += stats.ood_loss;
      epoch_stats.train_acc += stats.correct;
      epoch_stats.maxlogit_mean_id += stats.maxlogit_id;
      epoch_stats.maxlogit_mean_ood += stats.maxlogit_ood;
      n_id += batch_id.size();
      n_ood += batch_ood.size();
      if (!net.all_finite()) {
        throw NumericError("non-finite weights at epoch " +
                           std::to_string(epoch));
      }
    }
    epoch_stats.id_loss /= static_cast<double>(n_id);
    epoch_stats.train_acc /= static_cast<double>(n_id);
    epoch_stats.maxlogit_mean_id /= static_cast<double>(n_id);
    if (n_ood > 0) {
      epoch_stats.ood_loss /= static_cast<double>(n_ood);
      epoch_stats.maxlogit_mean_ood /= static_cast<double>(n_ood);
    }
    result.trace.push_back(epoch_stats);
  }
  return result;
}

}  // namespace

TrainResult train(const Dataset& id, const Dataset& aux,
                  const TrainPlan& plan) {
  return train_impl(id, aux, nullptr, plan);
}

SoftLabelSet distill_labels(const std::vector<Network>& teachers,
                            const Dataset& id, double temperature,
                            int workers) {
  if (teachers.empty()) throw ConfigError("distill_labels: no teachers");
  SoftLabelSet labels(id.size(),
                      std::vector<double>(teachers.front().k(), 0.0));
  const Batch all = all_samples(id);
  const auto xs = inputs_of(all);
  std::vector<Eigen::MatrixXd> logits(teachers.size());
  parallel_for(teachers.size(), workers, [&](std::size_t t) {
    logits[t] = forward_many(teachers[t], xs);
  });
  const double inv = 1.0 / static_cast<double>(teachers.size());
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    for (std::size_t n = 0; n < id.size(); ++n) {
      const auto q = softmax(column(logits[t], n), temperature);
      for (std::size_t i = 0; i < q.size(); ++i) labels[n][i] += q[i] * inv;
    }
  }
  return labels;
}

TrainResult train_distilled(const Dataset& id, const Dataset& aux,
                            const SoftLabelSet& soft_labels,
                            const TrainPlan& plan) {
  if (soft_labels.size() != id.size()) {
    throw MisalignedLabels("soft label count " +
                           std::to_string(soft_labels.size()) +
                           " != ID sample count " + std::to_string(id.size()));
  }
  for (const auto& row : soft_labels) {
    if (static_cast<int>(row.size()) != id.gen_config.k) {
      throw MisalignedLabels("soft label length differs from k");
    }
  }
  return train_impl(id, aux, &soft_labels, plan);
}

RegimeResult run_regime(const Dataset& id, const Dataset& aux,
                        const TrainPlan& plan, int workers) {
  RegimeResult out;
  if (plan.regime.kind == RegimeKind::Single) {
    out.final_model = train(id, aux, plan);
    return out;
  }
  const int n_teachers =
      plan.regime.kind == RegimeKind::SelfDistill ? 1 : plan.regime.teachers;
  out.teachers.resize(n_teachers);
  parallel_for(static_cast<std::size_t>(n_teachers), workers,
               [&](std::size_t t) {
                 TrainPlan tp = plan;
                 tp.seed = Rng::derive_seed(plan.seed, "train/teacher", t);
                 out.teachers[t] = train(id, aux, tp).net;
               });
  const auto labels =
      distill_labels(out.teachers, id, plan.regime.temperature, workers);
  TrainPlan sp = plan;
  sp.seed = Rng::derive_seed(plan.seed, "train/student");
  out.final_model = train_distilled(id, aux, labels, sp);
  return out;
}

}  // namespace mvol
