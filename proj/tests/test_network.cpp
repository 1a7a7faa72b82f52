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

#include "mvol/errors.hpp"
#include "mvol/network.hpp"

using namespace mvol;

namespace {

PatchMatrix random_input(int d, int P, Rng& rng, double scale = 1.0) {
  PatchMatrix X(d, P);
  for (auto& v : X.data()) v = scale * rng.normal();
  return X;
}

// Independent straight-loop evaluation of F_i, with its own activation.
double naive_logit(const Network& net, const PatchMatrix& X, int i) {
  const int q = net.act().q;
  const double lam = net.act().lambda;
  double F = 0.0;
  for (int r = 0; r < net.m(); ++r) {
    for (int p = 0; p < X.patches(); ++p) {
      double z = 0.0;
      for (int c = 0; c < net.d(); ++c) z += net.weight(i, r)[c] * X(c, p);
      if (z <= 0.0) continue;
      F += z <= lam ? std::pow(z, q) / (q * std::pow(lam, q - 1))
                    : z - (1.0 - 1.0 / q) * lam;
    }
  }
  return F;
}

}  // namespace

TEST_CASE("smoothed ReLU branch values") {
  const ActivationParams act{3, 0.25};
  CHECK(smoothed_relu(-0.5, act) == 0.0);
  CHECK(smoothed_relu(0.0, act) == 0.0);
  CHECK(smoothed_relu(0.25, act) == doctest::Approx(0.25 / 3).epsilon(1e-15));
  CHECK(smoothed_relu(0.1, act) ==
        doctest::Approx(0.001 / (3 * 0.0625)).epsilon(1e-14));
  CHECK(smoothed_relu(0.1, act) == doctest::Approx(0.0053333333333).epsilon(1e-9));
  CHECK(smoothed_relu(1.0, act) == doctest::Approx(1.0 - (2.0 / 3) * 0.25));
  // Continuous at λ from both sides.
  const double below = smoothed_relu(0.25 - 1e-12, act);
  const double above = smoothed_relu(0.25 + 1e-12, act);
  CHECK(std::abs(below - above) < 1e-11);
}

TEST_CASE("smoothed ReLU derivative") {
  CHECK(smoothed_relu_grad(0.3, {3, 0.25}) == 1.0);
  CHECK(smoothed_relu_grad(0.25, {3, 0.25}) == doctest::Approx(1.0));
  CHECK(smoothed_relu_grad(0.125, {2, 0.25}) == doctest::Approx(0.5));
  CHECK(smoothed_relu_grad(-1.0, {3, 0.25}) == 0.0);
  for (int q : {2, 3, 4, 8}) {
    const ActivationParams act{q, 0.3};
    for (double z = -0.5; z <= 1.0; z += 0.0137) {
      const double h = 1e-6;
      const double fd =
          (smoothed_relu(z + h, act) - smoothed_relu(z - h, act)) / (2 * h);
      CHECK(smoothed_relu_grad(z, act) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("activation parameters are validated") {
  CHECK_THROWS_AS((ActivationParams{1, 0.25}.validate()), ConfigError);
  CHECK_THROWS_AS((ActivationParams{3, 0.0}.validate()), ConfigError);
  CHECK_NOTHROW((ActivationParams{2, 1.0}.validate()));
}

TEST_CASE("init: sigma0 must be positive and sets the coordinate variance") {
  Rng rng(1);
  CHECK_THROWS_AS(init_network(2, 2, 4, {3, 0.25}, 0.0, rng), ConfigError);
  const double s0 = 0.07;
  const Network net = init_network(10, 50, 200, {3, 0.25}, s0, rng);
  REQUIRE(net.weights().size() == 100000);
  double sum = 0.0, sq = 0.0;
  for (double w : net.weights()) {
    sum += w;
    sq += w * w;
  }
  const double n = static_cast<double>(net.weights().size());
  const double var = sq / n - (sum / n) * (sum / n);
  CHECK(std::abs(var / (s0 * s0) - 1.0) < 0.05);
  Rng a(2), b(3);
  CHECK(init_network(2, 2, 4, {3, 0.25}, s0, a) !=
        init_network(2, 2, 4, {3, 0.25}, s0, b));
  Rng c(2), c2(2);
  CHECK(init_network(2, 2, 4, {3, 0.25}, s0, c) ==
        init_network(2, 2, 4, {3, 0.25}, s0, c2));
}

TEST_CASE("forward: linear branch on one aligned patch") {
  const int d = 5;
  for (int q : {2, 3, 5}) {
    const ActivationParams act{q, 0.25};
    Network net(1, 1, d, act, 0.1);
    std::vector<double> v{0.6, 0.0, 0.8, 0.0, 0.0};
    for (int c = 0; c < d; ++c) net.weight(0, 0)[c] = v[c];
    for (double cval : {0.25, 0.7, 3.0}) {
      PatchMatrix X(d, 1);
      for (int c = 0; c < d; ++c) X(c, 0) = cval * v[c];
      const double want = cval - (1.0 - 1.0 / q) * 0.25;
      CHECK(forward(net, X)[0] == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("forward: zero weights give zero logits") {
  Rng rng(4);
  const Network net(3, 4, 6, {3, 0.25}, 0.1);
  for (double z : forward(net, random_input(6, 5, rng))) CHECK(z == 0.0);
}

TEST_CASE("forward matches a straight-loop oracle") {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng = Rng::derive(5, "forward", trial);
    const int k = 2 + trial % 3, m = 1 + trial % 4, d = 3 + trial % 6;
    const ActivationParams act{2 + trial % 3, 0.1 + 0.05 * (trial % 5)};
    const Network net = init_network(k, m, d, act, 0.5, rng);
    const PatchMatrix X = random_input(d, 1 + trial % 5, rng);
    const auto F = forward(net, X);
    REQUIRE(F.size() == static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      CHECK(std::abs(F[i] - naive_logit(net, X, i)) < 1e-12);
    }
  }
  Rng rng(6);
  const Network net = init_network(2, 2, 4, {3, 0.25}, 0.1, rng);
  CHECK_THROWS_AS(forward(net, PatchMatrix(5, 2)), ShapeMismatch);
}

TEST_CASE("forward_grad: zero weights give a zero Jacobian") {
  Rng rng(7);
  const Network net(2, 3, 4, {3, 0.25}, 0.1);
  const auto J = forward_grad(net, random_input(4, 3, rng));
  for (double g : J.data()) CHECK(g == 0.0);
}

TEST_CASE("forward_grad matches central finite differences") {
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    Rng rng = Rng::derive(8, "grad", trial);
    const int k = 2 + trial % 2, m = 1 + trial % 3, d = 3 + trial % 4;
    const int P = 1 + trial % 4;
    const ActivationParams act{2 + trial % 3, 0.3};
    Network net = init_network(k, m, d, act, 0.4, rng);
    const PatchMatrix X = random_input(d, P, rng);
    const auto J = forward_grad(net, X);
    for (int i = 0; i < k; ++i) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) {
          const double h = 1e-6;
          double& w = net.weight(i, r)[c];
          const double w0 = w;
          w = w0 + h;
          const auto up = forward(net, X);
          w = w0 - h;
          const auto dn = forward(net, X);
          w = w0;
          for (int j = 0; j < k; ++j) {
            const double fd = (up[j] - dn[j]) / (2 * h);
            const double an = J.entry(j, i, r, c);
            if (j != i) {
              // Cross-class block: structurally zero, and F_j ignores w_i.
              CHECK(an == 0.0);
              CHECK(fd == 0.0);
            } else {
              CHECK(std::abs(an - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
              ++checked;
            }
          }
        }
      }
    }
  }
  CHECK(checked > 300);
}

TEST_CASE("BatchPass agrees with per-sample forward and forward_grad") {
  Rng rng(9);
  const int k = 3, m = 4, d = 7, P = 5, B = 6;
  const Network net = init_network(k, m, d, {3, 0.3}, 0.5, rng);
  std::vector<PatchMatrix> xs;
  for (int b = 0; b < B; ++b) xs.push_back(random_input(d, P, rng));
  std::vector<const PatchMatrix*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  BatchPass pass;
  const Eigen::MatrixXd& L = pass.run(net, ptrs);
  REQUIRE(L.rows() == k);
  REQUIRE(L.cols() == B);
  Eigen::MatrixXd coef(k, B);
  for (int b = 0; b < B; ++b) {
    const auto F = forward(net, xs[b]);
    for (int i = 0; i < k; ++i) {
      CHECK(std::abs(L(i, b) - F[i]) < 1e-12);
      coef(i, b) = rng.normal();
    }
  }
  std::vector<double> grad;
  pass.weight_gradient(coef, grad);
  std::vector<double> want(net.weights().size(), 0.0);
  for (int b = 0; b < B; ++b) {
    const auto J = forward_grad(net, xs[b]);
    for (int i = 0; i < k; ++i) {
      for (int r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) {
          want[(static_cast<std::size_t>(i) * m + r) * d + c] +=
              coef(i, b) * J.block(i, r)[c];
        }
      }
    }
  }
  REQUIRE(grad.size() == want.size());
  for (std::size_t t = 0; t < want.size(); ++t) {
    CHECK(std::abs(grad[t] - want[t]) < 1e-12);
  }
  const Eigen::MatrixXd many = forward_many(net, ptrs);
  CHECK((many - L).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("all_finite flags NaN weights") {
  Network net(1, 1, 2, {3, 0.25}, 0.1);
  CHECK(net.all_finite());
  net.weights()[1] = std::nan("");
  CHECK(!net.all_finite());
}
