// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mlbatch/error.hpp"
#include "mlbatch/model.hpp"
#include "oracles.hpp"

using namespace mlbatch;

namespace {

Matrix random_inputs(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("forward with zero parameters outputs one half") {
  auto params = MlpParams::zeros({4, 8, 3});
  Rng rng(1);
  const Matrix probs = forward(params, random_inputs(5, 4, rng));
  CHECK(probs.rows() == 5);
  CHECK(probs.cols() == 3);
  CHECK((probs.array() == 0.5).all());
}

TEST_CASE("single layer with orthogonal input outputs one half") {
  auto params = MlpParams::zeros({2, 1});
  params.weight(0)(0, 0) = 3.0;
  params.weight(0)(1, 0) = -1.5;
  Matrix x(1, 2);
  x << 1.0, 2.0;
  CHECK(forward(params, x)(0, 0) == 0.5);
}

TEST_CASE("forward matches a straight-line re-evaluation") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto params = MlpParams::glorot({6, 9, 5, 4}, rng);
    for (Eigen::Index k = 0; k < params.values().size(); ++k) params.values()[k] += 0.2 * rng.normal();
    const Matrix x = random_inputs(7, 6, rng);
    const Matrix probs = forward(params, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      std::vector<double> row(x.cols());
      for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] = x(i, j);
      const auto expect = oracle::forward_row(params, row);
      for (Eigen::Index j = 0; j < probs.cols(); ++j)
        CHECK(std::abs(probs(i, j) - expect[j]) <= 1e-12 * std::abs(expect[j]));
    }
  }
}

TEST_CASE("forward stays strictly inside the unit interval") {
  auto params = MlpParams::zeros({1, 2});
  params.weight(0)(0, 0) = 1e4;
  params.weight(0)(0, 1) = -1e4;
  Matrix x(2, 1);
  x << 1.0, -1.0;
  const Matrix p = forward(params, x);
  CHECK((p.array() > 0.0).all());
  CHECK((p.array() < 1.0).all());
}

TEST_CASE("forward rejects a mismatched input width") {
  auto params = MlpParams::zeros({3, 2});
  CHECK_THROWS_AS(forward(params, Matrix::Zero(2, 4)), DimensionError);
}

TEST_CASE("bce loss values") {
  Matrix p = Matrix::Constant(3, 2, 0.5);
  Matrix y(3, 2);
  y << 1, 0, 0, 1, 1, 1;
  CHECK(bce_loss(p, y) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  CHECK(bce_loss(y, y) <= 1e-11);
  CHECK(bce_loss(y, y) >= 0.0);

  Matrix p2(1, 2), y2(1, 2);
  p2 << 0.9, 0.2;
  y2 << 1, 0;
  CHECK(std::abs(bce_loss(p2, y2) - (-std::log(0.9) - std::log(0.8)) / 2) <= 1e-15);

  CHECK_THROWS_AS(bce_loss(p2, y), DimensionError);
}

TEST_CASE("backward on dead inputs") {
  auto params = MlpParams::zeros({3, 4, 2});
  const Matrix x = Matrix::Zero(4, 3);
  Matrix y(4, 2);
  y << 1, 0, 1, 1, 0, 0, 1, 0;
  const auto g = backward(params, x, y);
  const double scale = 1.0 / (4 * 2);
  for (int j = 0; j < 2; ++j) {
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) expect += (0.5 - y(i, j)) * scale;
    CHECK(std::abs(g.grad.bias(1)[j] - expect) <= 1e-15);
  }
  CHECK(g.grad.weight(0).isZero(0.0));
  CHECK(g.grad.weight(1).isZero(0.0));
  CHECK(g.grad.bias(0).isZero(0.0));
}

TEST_CASE("backward matches central finite differences") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    CAPTURE(seed);
    CHECK(oracle::gradient_check(seed) <= 1e-4);
  }
}

TEST_CASE("gradient is invariant to duplicating the batch") {
  Rng rng(3);
  auto params = MlpParams::glorot({5, 7, 3}, rng);
  const Matrix x = random_inputs(6, 5, rng);
  const Matrix y = oracle::random_labels(6, 3, rng);
  Matrix x2(12, 5), y2(12, 3);
  x2 << x, x;
  y2 << y, y;
  const auto a = backward(params, x, y, 1e-3);
  const auto b = backward(params, x2, y2, 1e-3);
  CHECK((a.grad.values() - b.grad.values()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(a.loss - b.loss) <= 1e-12);
}

TEST_CASE("adam first step recovers the gradient") {
  Rng rng(5);
  auto params = MlpParams::glorot({3, 2}, rng);
  auto grad = MlpParams::zeros({3, 2});
  for (Eigen::Index k = 0; k < grad.values().size(); ++k) grad.values()[k] = rng.normal();
  AdamState state(params, AdamConfig{.weight_decay = 0.0});
  adam_step(state, params, grad);
  CHECK(state.step == 1);
  CHECK((state.corrected_first_moment() - grad.values()).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((state.v.array() >= 0.0).all());
}

TEST_CASE("adam with zero gradient and no decay is the identity") {
  Rng rng(9);
  auto params = MlpParams::glorot({4, 3, 2}, rng);
  const Vector before = params.values();
  AdamState state(params, AdamConfig{.weight_decay = 0.0});
  const auto zero = MlpParams::zeros({4, 3, 2});
  for (int i = 0; i < 5; ++i) adam_step(state, params, zero);
  CHECK(params.values() == before);
}

TEST_CASE("adam matches a hand-unrolled scalar recurrence") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 1e-4;
  auto params = MlpParams::zeros({1, 1});
  params.values()[0] = 0.3;  // weight
  params.values()[1] = -0.2; // bias
  AdamState state(params, AdamConfig{lr, b1, b2, eps, wd});
  const double grads[3][2] = {{0.5, -1.0}, {-0.25, 2.0}, {1.5, 0.125}};

  double theta[2] = {0.3, -0.2}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 3; ++t) {
    auto g = MlpParams::zeros({1, 1});
    g.values()[0] = grads[t - 1][0];
    g.values()[1] = grads[t - 1][1];
    adam_step(state, params, g);
    for (int k = 0; k < 2; ++k) {
      const double gk = grads[t - 1][k] + wd * theta[k];
      m[k] = b1 * m[k] + (1 - b1) * gk;
      v[k] = b2 * v[k] + (1 - b2) * gk * gk;
      const double mhat = m[k] / (1 - std::pow(b1, t));
      const double vhat = v[k] / (1 - std::pow(b2, t));
      theta[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    CHECK(std::abs(params.values()[0] - theta[0]) <= 1e-12);
    CHECK(std::abs(params.values()[1] - theta[1]) <= 1e-12);
  }
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  auto params = MlpParams::zeros({2, 2});
  params.values().setConstant(0.25);
  const Vector before = params.values();
  AdamState state(params, AdamConfig{});
  auto g = MlpParams::zeros({2, 2});
  g.values()[3] = std::nan("");
  CHECK_THROWS_AS(adam_step(state, params, g), NumericError);
  CHECK(params.values() == before);
  CHECK(state.step == 0);
}

TEST_CASE("parameter snapshots round-trip exactly") {
  Rng rng(11);
  auto params = MlpParams::glorot({5, 4, 3}, rng);
  params.bias(0)[1] = 1.0 / 3.0;
  std::stringstream ss;
  save_params(ss, params);
  const auto back = load_params(ss);
  CHECK(back.widths() == params.widths());
  CHECK(back.values() == params.values());
  CHECK(back.weight(0)(2, 1) == params.weight(0)(2, 1));

  std::stringstream bad("#MLP-PARAMS v1 widths=2,1\nW 0 2 1\n0.5\n");
  CHECK_THROWS_AS(load_params(bad), ParseError);
}

TEST_CASE("training steps are deterministic for a seed") {
  auto run = [] {
    Rng rng(21);
    auto params = MlpParams::glorot({4, 6, 2}, rng);
    const Matrix x = random_inputs(10, 4, rng);
    const Matrix y = oracle::random_labels(10, 2, rng);
    AdamState state(params, AdamConfig{});
    for (int s = 0; s < 15; ++s) adam_step(state, params, backward(params, x, y).grad);
    return params.values();
  };
  CHECK(run() == run());
}
