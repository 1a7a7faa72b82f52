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

#include "mvol/network.hpp"

#include <cmath>
#include <cstring>

#include "mvol/errors.hpp"

namespace mvol {

void ActivationParams::validate() const {
  if (q < 2) throw ConfigError("activation exponent q must be at least 2");
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ConfigError("activation threshold lambda must lie in (0, 1]");
  }
}

double smoothed_relu(double z, const ActivationParams& act) {
  if (z <= 0.0) return 0.0;
  if (z >= act.lambda) return z - (1.0 - 1.0 / act.q) * act.lambda;
  return std::pow(z, act.q) / (act.q * std::pow(act.lambda, act.q - 1));
}

double smoothed_relu_grad(double z, const ActivationParams& act) {
  if (z <= 0.0) return 0.0;
  if (z >= act.lambda) return 1.0;
  return std::pow(z / act.lambda, act.q - 1);
}

namespace {

// q is tiny, so repeated multiplication beats std::pow in the hot loops.
inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

inline double act_fast(double z, int q, double lambda, double lin_shift,
                       double poly_scale) {
  if (z <= 0.0) return 0.0;
  if (z >= lambda) return z - lin_shift;
  return ipow(z, q) * poly_scale;
}

inline double act_grad_fast(double z, int q, double inv_lambda) {
  if (z <= 0.0) return 0.0;
  const double t = z * inv_lambda;
  if (t >= 1.0) return 1.0;
  return ipow(t, q - 1);
}

}  // namespace

Network::Network(int k, int m, int d, ActivationParams act, double sigma0)
    : k_(k), m_(m), d_(d), act_(act), sigma0_(sigma0),
      weights_(static_cast<std::size_t>(k) * m * d, 0.0) {
  if (k < 1 || m < 1 || d < 1) throw ConfigError("network dims must be >= 1");
  act_.validate();
}

bool Network::all_finite() const {
  for (double w : weights_) {
    if (!std::isfinite(w)) return false;
  }
  return true;
}

Network init_network(int k, int m, int d, const ActivationParams& act,
                     double sigma0, Rng& rng) {
  if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  Network net(k, m, d, act, sigma0);
  for (auto& w : net.weights()) w = sigma0 * rng.normal();
  return net;
}

std::vector<double> forward(const Network& net, const PatchMatrix& X) {
  if (X.d() != net.d()) throw ShapeMismatch("forward: patch dimension");
  std::vector<double> logits(net.k(), 0.0);
  for (int i = 0; i < net.k(); ++i) {
    double f = 0.0;
    for (int r = 0; r < net.m(); ++r) {
      const auto w = net.weight(i, r);
      for (int p = 0; p < X.patches(); ++p) {
        f += smoothed_relu(dot(w, X.patch(p)), net.act());
      }
    }
    logits[i] = f;
  }
  return logits;
}

LogitJacobian::LogitJacobian(int k, int m, int d)
    : k_(k), m_(m), d_(d), data_(static_cast<std::size_t>(k) * m * d, 0.0) {}

LogitJacobian forward_grad(const Network& net, const PatchMatrix& X) {
  if (X.d() != net.d()) throw ShapeMismatch("forward_grad: patch dimension");
  LogitJacobian jac(net.k(), net.m(), net.d());
  for (int i = 0; i < net.k(); ++i) {
    for (int r = 0; r < net.m(); ++r) {
      const auto w = net.weight(i, r);
      auto g = jac.block(i, r);
      for (int p = 0; p < X.patches(); ++p) {
        const auto x = X.patch(p);
        const double s = smoothed_relu_grad(dot(w, x), net.act());
        if (s == 0.0) continue;
        for (int c = 0; c < net.d(); ++c) g[c] += s * x[c];
      }
    }
  }
  return jac;
}

const Eigen::MatrixXd& BatchPass::run(
    const Network& net, std::span<const PatchMatrix* const> inputs) {
  k_ = net.k();
  m_ = net.m();
  d_ = net.d();
  act_ = net.act();
  const int B = static_cast<int>(inputs.size());
  P_ = B > 0 ? inputs[0]->patches() : 0;
  stacked_.resize(d_, static_cast<Eigen::Index>(B) * P_);
  for (int b = 0; b < B; ++b) {
    const PatchMatrix& X = *inputs[b];
    if (X.d() != d_ || X.patches() != P_) {
      throw ShapeMismatch("BatchPass: inconsistent input shapes");
    }
    std::memcpy(stacked_.data() + static_cast<std::size_t>(b) * P_ * d_,
                X.data().data(), sizeof(double) * X.data().size());
  }
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> W(net.weights().data(), k_ * m_, d_);
  pre_.resize(k_ * m_, stacked_.cols());
  pre_.noalias() = W * stacked_;

  const int q = act_.q;
  const double lambda = act_.lambda;
  const double lin_shift = (1.0 - 1.0 / q) * lambda;
  const double poly_scale = 1.0 / (q * ipow(lambda, q - 1));
  logits_.setZero(k_, B);
  for (int b = 0; b < B; ++b) {
    for (int p = 0; p < P_; ++p) {
      const auto col = pre_.col(static_cast<Eigen::Index>(b) * P_ + p);
      for (int i = 0; i < k_; ++i) {
        double f = 0.0;
        for (int r = 0; r < m_; ++r) {
          f += act_fast(col[i * m_ + r], q, lambda, lin_shift, poly_scale);
        }
        logits_(i, b) += f;
      }
    }
  }
  return logits_;
}

void BatchPass::weight_gradient(const Eigen::MatrixXd& coef,
                                std::vector<double>& grad) const {
  const Eigen::Index B = logits_.cols();
  if (coef.rows() != k_ || coef.cols() != B) {
    throw ShapeMismatch("weight_gradient: coefficient shape");
  }
  const double inv_lambda = 1.0 / act_.lambda;
  Eigen::MatrixXd scaled(pre_.rows(), pre_.cols());
  for (Eigen::Index b = 0; b < B; ++b) {
    for (int p = 0; p < P_; ++p) {
      const Eigen::Index col = b * P_ + p;
      for (int i = 0; i < k_; ++i) {
        const double c = coef(i, b);
        for (int r = 0; r < m_; ++r) {
          const int row = i * m_ + r;
          scaled(row, col) =
              c == 0.0 ? 0.0
                       : c * act_grad_fast(pre_(row, col), act_.q, inv_lambda);
        }
      }
    }
  }
  grad.assign(static_cast<std::size_t>(k_) * m_ * d_, 0.0);
  using RowMat =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMat> G(grad.data(), k_ * m_, d_);
  G.noalias() = scaled * stacked_.transpose();
}

Eigen::MatrixXd forward_many(const Network& net,
                             std::span<const PatchMatrix* const> inputs) {
  constexpr std::size_t kChunk = 256;
  Eigen::MatrixXd out(net.k(), static_cast<Eigen::Index>(inputs.size()));
  BatchPass pass;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, inputs.size() - start);
    const auto& logits = pass.run(net, inputs.subspan(start, len));
    out.middleCols(static_cast<Eigen::Index>(start),
                   static_cast<Eigen::Index>(len)) = logits;
  }
  return out;
}

}  // namespace mvol
