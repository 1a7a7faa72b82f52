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

// Two-layer scorer F_i(X) = Σ_r Σ_p act(<w_{i,r}, x_p>) with the smoothed
// ReLU
//
//   act(z) = 0                       z <= 0
//            z^q / (q λ^(q-1))       0 <= z <= λ
//            z - (1 - 1/q) λ         z >= λ
//
// Each class i owns m filters w_{i,r} in R^d; filters are shared across
// patches but not across classes.

#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "mvol/patch_matrix.hpp"
#include "mvol/rng.hpp"

namespace mvol {

struct ActivationParams {
  int q = 3;
  double lambda = 0.25;

  void validate() const;
  friend bool operator==(const ActivationParams&,
                         const ActivationParams&) = default;
};

double smoothed_relu(double z, const ActivationParams& act);
double smoothed_relu_grad(double z, const ActivationParams& act);

class Network {
 public:
  Network() = default;
  // All weights zero.
  Network(int k, int m, int d, ActivationParams act, double sigma0);

  int k() const { return k_; }
  int m() const { return m_; }
  int d() const { return d_; }
  const ActivationParams& act() const { return act_; }
  double sigma0() const { return sigma0_; }

  std::span<double> weight(int i, int r) {
    return {weights_.data() + offset(i, r), static_cast<std::size_t>(d_)};
  }
  std::span<const double> weight(int i, int r) const {
    return {weights_.data() + offset(i, r), static_cast<std::size_t>(d_)};
  }
  // Row-major over (class, neuron, coordinate).
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }

  bool all_finite() const;

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::size_t offset(int i, int r) const {
    return (static_cast<std::size_t>(i) * m_ + r) * d_;
  }

  int k_ = 0;
  int m_ = 0;
  int d_ = 0;
  ActivationParams act_;
  double sigma0_ = 0.0;
  std::vector<double> weights_;
};

// Each weight coordinate i.i.d. N(0, sigma0^2). Throws ConfigError unless
// sigma0 > 0.
Network init_network(int k, int m, int d, const ActivationParams& act,
                     double sigma0, Rng& rng);

// Logits F_1..F_k. Throws ShapeMismatch when X.d() != net.d().
std::vector<double> forward(const Network& net, const PatchMatrix& X);

// ∂F_i/∂w_{i,r} = Σ_p act'(<w_{i,r}, x_p>) x_p, stored with the same layout
// as the weights. F_j does not depend on w_{i,r} for j != i, so those blocks
// are structurally zero and not stored.
class LogitJacobian {
 public:
  LogitJacobian(int k, int m, int d);

  std::span<double> block(int i, int r) {
    return {data_.data() + (static_cast<std::size_t>(i) * m_ + r) * d_,
            static_cast<std::size_t>(d_)};
  }
  std::span<const double> block(int i, int r) const {
    return {data_.data() + (static_cast<std::size_t>(i) * m_ + r) * d_,
            static_cast<std::size_t>(d_)};
  }
  // ∂F_logit / ∂w_{cls,r}[c]; zero whenever logit != cls.
  double entry(int logit, int cls, int r, int c) const {
    return logit == cls ? block(cls, r)[c] : 0.0;
  }
  const std::vector<double>& data() const { return data_; }

 private:
  int k_, m_, d_;
  std::vector<double> data_;
};

LogitJacobian forward_grad(const Network& net, const PatchMatrix& X);

// Batched forward/backward used by training and scoring. `run` caches the
// pre-activations so that `weight_gradient` can chain per-sample logit
// gradients through the network without recomputing them.
class BatchPass {
 public:
  // Computes logits for every input; returns a k x B matrix.
  const Eigen::MatrixXd& run(const Network& net,
                             std::span<const PatchMatrix* const> inputs);
  const Eigen::MatrixXd& logits() const { return logits_; }

  // Σ_b Σ_i coef(i, b) ∂F_i(X_b)/∂w, written into `grad` (resized to the
  // weight layout). Requires a preceding `run` on the same network.
  void weight_gradient(const Eigen::MatrixXd& coef,
                       std::vector<double>& grad) const;

 private:
  int k_ = 0, m_ = 0, d_ = 0, P_ = 0;
  ActivationParams act_;
  Eigen::MatrixXd stacked_;  // d x (B*P)
  Eigen::MatrixXd pre_;      // (k*m) x (B*P)
  Eigen::MatrixXd logits_;   // k x B
};

// Logits of many inputs, evaluated in chunks; column b = input b.
Eigen::MatrixXd forward_many(const Network& net,
                             std::span<const PatchMatrix* const> inputs);

}  // namespace mvol
