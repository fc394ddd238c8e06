#include <doctest.h>

#include <cmath>
#include <random>

#include "cml/errors.hpp"
#include "cml/neural.hpp"

using namespace cml;
using doctest::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

const ActivationKind kAllKinds[] = {ActivationKind::Relu, ActivationKind::Tanh,
                                    ActivationKind::Sigmoid, ActivationKind::Swish,
                                    ActivationKind::Softplus};

MatrixXd random_inputs(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixXd X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(rng);
  return X;
}

// Randomizes biases too so no activation sits exactly at a kink.
Network random_net(const std::vector<int>& sizes, Activation act, std::uint64_t seed) {
  Network net = init_network(sizes, act, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& b : net.params.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
  }
  return net;
}

// L = sum(w .* Y) + 0.5 sum(Y.^2), a generic smooth scalar loss.
double loss_of(const Network& net, const MatrixXd& X, const MatrixXd& W) {
  const MatrixXd Y = forward(net, X);
  return (W.array() * Y.array()).sum() + 0.5 * Y.squaredNorm();
}

}  // namespace

TEST_CASE("activation values") {
  CHECK(activation({ActivationKind::Swish, 300.0}, 0.1) ==
        Approx(0.1 * sigmoid(30.0)).epsilon(1e-15));
  CHECK(activation({ActivationKind::Swish, 300.0}, 0.1) == Approx(0.1).epsilon(1e-12));
  CHECK(activation({ActivationKind::Relu}, -2.0) == 0.0);
  CHECK(activation_prime({ActivationKind::Relu}, -2.0) == 0.0);
  CHECK(activation_prime({ActivationKind::Relu}, 0.0) == 0.0);
  CHECK(activation({ActivationKind::Tanh}, 0.0) == 0.0);
  CHECK(activation_prime({ActivationKind::Tanh}, 0.0) == 1.0);
  CHECK(activation({ActivationKind::Softplus}, 800.0) == Approx(800.0));
  CHECK(std::isfinite(activation({ActivationKind::Softplus}, -800.0)));
}

TEST_CASE("activation derivatives match finite differences (property)") {
  const double h = 1e-6;
  for (ActivationKind k : kAllKinds) {
    const Activation a{k, k == ActivationKind::Swish ? 3.0 : 1.0};
    for (double x = -2.05; x < 2.0; x += 0.1) {
      CHECK(activation_prime(a, x) ==
            Approx((activation(a, x + h) - activation(a, x - h)) / (2 * h)).epsilon(1e-6).scale(1e-8));
      CHECK(activation_second(a, x) ==
            Approx((activation_prime(a, x + h) - activation_prime(a, x - h)) / (2 * h))
                .epsilon(1e-5)
                .scale(1e-6));
    }
  }
}

TEST_CASE("activation names round-trip") {
  for (ActivationKind k : kAllKinds) CHECK(parse_activation(to_string(k)).kind == k);
  CHECK_THROWS_AS(parse_activation("gelu"), UnknownKind);
}

TEST_CASE("initialization") {
  const std::vector<int> sizes{3, 100, 100, 100, 100, 100, 1};
  const Network a = init_network(sizes, {}, 42);
  const Network b = init_network(sizes, {}, 42);
  const Network c = init_network(sizes, {}, 43);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    CHECK(a.params.weights[l] == b.params.weights[l]);
    CHECK(a.params.biases[l] == b.params.biases[l]);
    CHECK(a.params.biases[l].isZero(0.0));
  }
  CHECK(a.params.weights[0] != c.params.weights[0]);
  // Glorot bound sqrt(6 / (fan_in + fan_out)).
  CHECK(a.params.weights[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 200.0));
  CHECK_THROWS_AS(init_network({3}, {}, 1), InvalidShape);
  CHECK_THROWS_AS(init_network({3, 0, 1}, {}, 1), InvalidShape);
}

TEST_CASE("forward with hand-set weights") {
  Network net = init_network({2, 2, 1}, {ActivationKind::Relu}, 1);
  net.params.weights[0] = MatrixXd::Identity(2, 2);
  net.params.biases[0].setZero();
  ForwardTape tape;
  MatrixXd X(2, 1);
  X << 1.0, -1.0;
  forward(net, X, tape);
  CHECK(tape.inputs[1](0, 0) == 1.0);
  CHECK(tape.inputs[1](1, 0) == 0.0);

  Network zero = init_network({3, 5, 5, 1}, {ActivationKind::Tanh}, 1);
  for (auto& W : zero.params.weights) W.setZero();
  zero.params.biases.back()[0] = 0.7;
  CHECK(forward(zero, random_inputs(3, 4, 3)).isApproxToConstant(0.7, 0.0));

  const Network r = random_net({3, 8, 8, 1}, {ActivationKind::Softplus}, 9);
  const MatrixXd X3 = random_inputs(3, 10, 4);
  CHECK(forward(r, X3) == forward(r, X3));
  CHECK(forward_point(r, X3.col(2))[0] == forward(r, X3)(0, 2));
  CHECK_THROWS_AS(forward(r, random_inputs(2, 3, 1)), DimensionMismatch);
}

TEST_CASE("backward: hand chain rule and trivial losses") {
  Network net = init_network({3, 4, 1}, {ActivationKind::Tanh}, 5);
  for (auto& W : net.params.weights) W.setZero();
  net.params.biases.back()[0] = 0.4;
  const MatrixXd X = random_inputs(3, 1, 2);
  ForwardTape tape;
  const MatrixXd Y = forward(net, X, tape);
  const ParameterSet g = backward(net, tape, Y);  // L = 0.5 |Y|^2
  for (const auto& W : g.weights) CHECK(W.isZero(0.0));
  CHECK(g.biases.back()[0] == Approx(0.4));

  const ParameterSet z = backward(net, tape, MatrixXd::Zero(1, 1));
  for (std::size_t l = 0; l < z.weights.size(); ++l) {
    CHECK(z.weights[l].isZero(0.0));
    CHECK(z.biases[l].isZero(0.0));
  }
}

TEST_CASE("parameter gradients match finite differences for every activation (property)") {
  const double h = 1e-5;
  int checked = 0;
  for (ActivationKind k : kAllKinds) {
    for (std::uint64_t s = 0; s < 5; ++s) {
      Network net = random_net({3, 7, 6, 1}, {k, k == ActivationKind::Swish ? 2.0 : 1.0}, 100 + s);
      const MatrixXd X = random_inputs(3, 6, 200 + s);
      const MatrixXd W = random_inputs(1, 6, 300 + s);
      ForwardTape tape;
      const MatrixXd Y = forward(net, X, tape);
      const ParameterSet g = backward(net, tape, W + Y);
      for (std::size_t c = 0; c < g.size(); ++c) {
        const double orig = net.params.coeff(c);
        net.params.coeff(c) = orig + h;
        const double lp = loss_of(net, X, W);
        net.params.coeff(c) = orig - h;
        const double lm = loss_of(net, X, W);
        net.params.coeff(c) = orig;
        const double fd = (lp - lm) / (2 * h);
        CHECK(g.coeff(c) == Approx(fd).epsilon(1e-4).scale(1e-2));
        ++checked;
      }
    }
  }
  CHECK(checked >= 1000);
}

TEST_CASE("tangent-carrying backward matches finite differences (property)") {
  // L = sum(a .* Y_dot) + 0.5 sum(Y_dot.^2), with Y_dot = dY/dx along dir.
  const double h = 1e-5;
  for (ActivationKind k : {ActivationKind::Tanh, ActivationKind::Softplus, ActivationKind::Swish}) {
    Network net = random_net({2, 6, 5, 1}, {k, 1.5}, 17);
    const MatrixXd X = random_inputs(2, 5, 18);
    const MatrixXd A = random_inputs(1, 5, 19);
    VectorXd dir(2);
    dir << 1.0, 0.0;
    const auto loss = [&](const Network& n) {
      ForwardTape t;
      MatrixXd Yd;
      forward_with_tangent(n, X, dir, t, Yd);
      return (A.array() * Yd.array()).sum() + 0.5 * Yd.squaredNorm();
    };
    ForwardTape tape;
    MatrixXd Yd;
    forward_with_tangent(net, X, dir, tape, Yd);
    const MatrixXd dYd = A + Yd;
    const ParameterSet g = backward(net, tape, MatrixXd::Zero(1, 5), &dYd);
    for (std::size_t c = 0; c < g.size(); ++c) {
      const double orig = net.params.coeff(c);
      net.params.coeff(c) = orig + h;
      const double lp = loss(net);
      net.params.coeff(c) = orig - h;
      const double lm = loss(net);
      net.params.coeff(c) = orig;
      CHECK(g.coeff(c) == Approx((lp - lm) / (2 * h)).epsilon(1e-4).scale(1e-2));
    }
  }
}

TEST_CASE("input Jacobian") {
  // All-positive Relu network acts linearly: J = W3 W2 W1.
  Network lin = init_network({3, 4, 4, 1}, {ActivationKind::Relu}, 2);
  for (auto& W : lin.params.weights) W = W.cwiseAbs();
  const VectorXd x = VectorXd::Constant(3, 0.5);
  const MatrixXd prod = lin.params.weights[2] * lin.params.weights[1] * lin.params.weights[0];
  CHECK((input_jacobian(lin, x) - prod).cwiseAbs().maxCoeff() < 1e-14);

  const Network tanh_net = init_network({3, 5, 5, 1}, {ActivationKind::Tanh}, 3);
  const MatrixXd tp =
      tanh_net.params.weights[2] * tanh_net.params.weights[1] * tanh_net.params.weights[0];
  CHECK((input_jacobian(tanh_net, VectorXd::Zero(3)) - tp).cwiseAbs().maxCoeff() < 1e-14);

  const double h = 1e-6;
  for (ActivationKind k : kAllKinds) {
    const Network net = random_net({3, 9, 9, 1}, {k, 1.0}, 31);
    const MatrixXd pts = random_inputs(3, 20, 32);
    for (Eigen::Index c = 0; c < pts.cols(); ++c) {
      const VectorXd p = pts.col(c);
      const MatrixXd J = input_jacobian(net, p);
      for (int j = 0; j < 3; ++j) {
        VectorXd a = p, b = p;
        a[j] += h;
        b[j] -= h;
        const double fd = (forward_point(net, a)[0] - forward_point(net, b)[0]) / (2 * h);
        CHECK(J(0, j) == Approx(fd).epsilon(1e-5).scale(1e-4));
      }
    }
  }
}

TEST_CASE("point evaluator agrees with the batched path") {
  for (ActivationKind k : kAllKinds) {
    const Network net = random_net({5, 12, 12, 12, 1}, {k, 1.0}, 77);
    PointEvaluator ev(net);
    const MatrixXd pts = random_inputs(5, 10, 78);
    for (Eigen::Index c = 0; c < pts.cols(); ++c) {
      const VectorXd p = pts.col(c);
      const double ref = forward_point(net, p)[0];
      CHECK(ev.value({p.data(), 5}) == Approx(ref).epsilon(1e-13));
      double grad[3];
      const double v = ev.value_and_gradient({p.data(), 5}, 3, grad);
      CHECK(v == Approx(ref).epsilon(1e-13));
      const MatrixXd J = input_jacobian(net, p);
      for (int j = 0; j < 3; ++j) CHECK(grad[j] == Approx(J(0, j)).epsilon(1e-12).scale(1e-12));
    }
  }
}

TEST_CASE("Adam update") {
  Network net = init_network({1, 1}, {ActivationKind::Tanh}, 0);
  net.params.weights[0].setZero();
  net.params.biases[0].setZero();
  AdamState st = AdamState::for_network(net);
  ParameterSet g = ParameterSet::zeros_like(net.params);
  g.weights[0].setOnes();
  g.biases[0].setOnes();
  TrainingConfig cfg;
  adam_update(net, g, st, cfg);
  CHECK(net.params.weights[0](0, 0) == Approx(-1e-4).epsilon(1e-6));
  CHECK(net.params.biases[0][0] == Approx(-1e-4).epsilon(1e-6));
  CHECK(st.step == 1);

  Network r = random_net({3, 4, 1}, {ActivationKind::Tanh}, 4);
  const Network before = r;
  AdamState st2 = AdamState::for_network(r);
  adam_update(r, ParameterSet::zeros_like(r.params), st2, cfg);
  for (std::size_t l = 0; l < r.num_layers(); ++l) CHECK(r.params.weights[l] == before.params.weights[l]);

  // Determinism: identical inputs give bitwise identical parameters.
  Network a = before, b = before;
  AdamState sa = AdamState::for_network(a), sb = AdamState::for_network(b);
  ParameterSet gg = ParameterSet::zeros_like(a.params);
  for (std::size_t c = 0; c < gg.size(); ++c) gg.coeff(c) = std::sin(static_cast<double>(c));
  for (int k = 0; k < 5; ++k) {
    adam_update(a, gg, sa, cfg);
    adam_update(b, gg, sb, cfg);
  }
  for (std::size_t c = 0; c < gg.size(); ++c) CHECK(a.params.coeff(c) == b.params.coeff(c));
}

TEST_CASE("training configuration is validated") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate());
  c.learning_rate = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.epochs = 0;
  CHECK_NOTHROW(c.validate());
}
