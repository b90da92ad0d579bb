#include "helpers.hpp"

#include <doctest.h>

#include <cstring>
#include <limits>
#include <random>

using namespace nfbst;
using testing::central_difference;
using testing::naive_forward;
using testing::random_params;
using testing::relative_error;

namespace {

// 1 -> identity(1) -> 1 with unit first layer: behaves like y = w x + b.
ParameterVector linear_params(double w, double b) {
  ParameterVector p(4);
  p << 1.0, 0.0, w, b;
  return p;
}

Architecture linear_arch() { return Architecture{1, {1}, Activation::identity}; }

// f(x) = ReLU(x0): 1 -> relu(1) -> 1, all unit weights, zero biases.
Architecture relu_arch() { return Architecture{1, {1}, Activation::relu}; }
ParameterVector relu_params() {
  ParameterVector p(4);
  p << 1.0, 0.0, 1.0, 0.0;
  return p;
}

}  // namespace

TEST_CASE("parameter count and layout") {
  Architecture arch{8, {20, 20, 20}, Activation::relu};
  CHECK(arch.parameter_count() == 8 * 20 + 20 + 20 * 20 + 20 + 20 * 20 + 20 + 20 + 1);
  CHECK(arch.weight_offset(0) == 0);
  CHECK(arch.bias_offset(0) == 160);
  CHECK(arch.weight_offset(1) == 180);
  CHECK(arch.weight_index(1, 2, 3) == 180 + 2 * 20 + 3);

  ParameterVector p = ParameterVector::Zero(arch.parameter_count());
  p(arch.weight_index(0, 4, 6)) = 3.5;
  CHECK(layer_weights<double>(arch, p, 0)(4, 6) == 3.5);
}

TEST_CASE("architecture validation") {
  CHECK_THROWS_AS((Architecture{3, {}, Activation::relu}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Architecture{3, {4, 0}, Activation::relu}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((Architecture{0, {4}, Activation::relu}.validate()), std::invalid_argument);
  CHECK_NOTHROW((Architecture{3, {4}, Activation::tanh}.validate()));
}

TEST_CASE("activation names round trip") {
  for (auto a : {Activation::relu, Activation::tanh, Activation::identity}) {
    CHECK(activation_from_string(to_string(a)) == a);
  }
  CHECK_THROWS(activation_from_string("sigmoid"));
}

TEST_CASE("single linear layer") {
  Eigen::VectorXd x(1);
  x << 3.0;
  CHECK(forward<double>(linear_arch(), linear_params(2.0, 1.0), x) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("relu composition at a negative input") {
  Eigen::VectorXd x(1);
  x << -0.5;
  CHECK(forward<double>(relu_arch(), relu_params(), x) == 0.0);
}

TEST_CASE("forward matches a naive loop oracle") {
  Rng rng(11);
  Architecture arch{8, {20, 20, 20}, Activation::relu};
  for (int rep = 0; rep < 50; ++rep) {
    const ParameterVector p = random_params(arch, rng, 0.4);
    const Eigen::MatrixXd x = uniform_matrix(1, 8, -1.0, 1.0, rng);
    const Eigen::VectorXd xv = x.row(0).transpose();
    const double oracle = naive_forward(arch, p, std::vector<double>(xv.data(), xv.data() + 8));
    CHECK(relative_error(forward<double>(arch, p, xv), oracle, 1e-300) <= 1e-12);
  }
}

TEST_CASE("batch forward agrees with single forward") {
  Rng rng(12);
  Architecture arch{5, {7, 3}, Activation::tanh};
  const ParameterVector p = random_params(arch, rng);
  const Eigen::MatrixXd rows = uniform_matrix(9, 5, -2.0, 2.0, rng);
  const Eigen::VectorXd batch = forward_batch<double>(arch, p, rows);
  const Eigen::MatrixXd grads = input_gradient_batch<double>(arch, p, rows);
  for (Index i = 0; i < rows.rows(); ++i) {
    const Eigen::VectorXd x = rows.row(i).transpose();
    CHECK(batch(i) == doctest::Approx(forward<double>(arch, p, x)).epsilon(1e-13));
    CHECK((grads.row(i).transpose() - input_gradient<double>(arch, p, x)).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("trace replays the output") {
  Rng rng(13);
  Architecture arch{4, {6, 5}, Activation::relu};
  const ParameterVector p = random_params(arch, rng);
  Eigen::VectorXd x = Eigen::VectorXd::Random(4);
  ForwardTrace<double> trace;
  const double y = forward<double>(arch, p, x, trace);
  REQUIRE(trace.inputs.size() == 3);
  CHECK(trace.inputs[1].size() == 6);
  CHECK(trace.pre_activations[2].size() == 1);
  // replay the last layer from the recorded input
  const double replay = (layer_weights<double>(arch, p, 2) * trace.inputs[2] + layer_bias<double>(arch, p, 2))(0);
  CHECK(replay == y);
  CHECK(trace.output() == y);
}

TEST_CASE("forward is pure") {
  Rng rng(14);
  Architecture arch{3, {4, 4}, Activation::tanh};
  const ParameterVector p = random_params(arch, rng);
  const Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  const double a = forward<double>(arch, p, x);
  const double b = forward<double>(arch, p, x);
  CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("dimension errors name expected and actual") {
  Architecture arch{3, {4}, Activation::relu};
  ParameterVector p = ParameterVector::Zero(arch.parameter_count());
  try {
    forward<double>(arch, p, Eigen::VectorXd::Zero(5));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(e.expected() == 3);
    CHECK(e.actual() == 5);
    CHECK(std::string(e.what()).find("expected 3") != std::string::npos);
  }
  CHECK_THROWS_AS(forward<double>(arch, ParameterVector::Zero(2), Eigen::VectorXd::Zero(3)), DimensionError);
  ParameterVector bad = p;
  bad(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(check_parameters(arch, bad), std::invalid_argument);
}

TEST_CASE("relu input gradient") {
  Eigen::VectorXd x(1);
  x << -0.7;
  CHECK(input_gradient<double>(relu_arch(), relu_params(), x)(0) == 0.0);
  x << 0.7;
  CHECK(input_gradient<double>(relu_arch(), relu_params(), x)(0) == 1.0);
  x << 0.0;  // subgradient convention
  CHECK(input_gradient<double>(relu_arch(), relu_params(), x)(0) == 0.0);
}

TEST_CASE("linear net gradient is constant") {
  Architecture arch{2, {1}, Activation::identity};
  ParameterVector p(5);
  p << 1.5, -2.0, 0.3, 1.0, 0.0;  // f = 1.5 x0 - 2 x1 + 0.3
  Rng rng(15);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd x = Eigen::VectorXd::Random(2) * 10.0;
    const Eigen::VectorXd g = input_gradient<double>(arch, p, x);
    CHECK(g(0) == doctest::Approx(1.5));
    CHECK(g(1) == doctest::Approx(-2.0));
  }
}

TEST_CASE("tanh input gradients match finite differences on 1000 random cases") {
  Rng rng(16);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_int_distribution<int> width(1, 12);
  std::uniform_int_distribution<int> depth(1, 3);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    Architecture arch{dim(rng), {}, Activation::tanh};
    for (int l = depth(rng); l > 0; --l) arch.hidden_widths.push_back(width(rng));
    const ParameterVector p = random_params(arch, rng, 0.7);
    const Eigen::VectorXd x = uniform_matrix(1, arch.input_dim, -1.0, 1.0, rng).row(0).transpose();
    const Eigen::VectorXd g = input_gradient<double>(arch, p, x);
    const Eigen::VectorXd fd =
        central_difference([&](const Eigen::VectorXd& z) { return forward<double>(arch, p, z); }, x, 1e-5);
    for (Index i = 0; i < g.size(); ++i) worst = std::max(worst, relative_error(g(i), fd(i), 1e-4));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("relu input gradients match finite differences away from kinks") {
  Rng rng(17);
  Architecture arch{4, {10, 10}, Activation::relu};
  int checked = 0;
  for (int rep = 0; rep < 300; ++rep) {
    const ParameterVector p = random_params(arch, rng, 0.6);
    const Eigen::VectorXd x = Eigen::VectorXd::Random(4);
    ForwardTrace<double> trace;
    forward<double>(arch, p, x, trace);
    bool smooth = true;
    for (Index l = 0; l + 1 < arch.layer_count(); ++l)
      smooth = smooth && (trace.pre_activations[static_cast<std::size_t>(l)].array().abs() > 1e-3).all();
    if (!smooth) continue;
    ++checked;
    const Eigen::VectorXd g = input_gradient<double>(arch, p, x);
    const Eigen::VectorXd fd =
        central_difference([&](const Eigen::VectorXd& z) { return forward<double>(arch, p, z); }, x, 1e-6);
    for (Index i = 0; i < 4; ++i) CHECK(relative_error(g(i), fd(i), 1e-4) <= 1e-5);
  }
  CHECK(checked > 50);
}

TEST_CASE("all-active relu net is affine") {
  Architecture arch{3, {5}, Activation::relu};
  ParameterVector p = ParameterVector::Zero(arch.parameter_count());
  Rng rng(18);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (Index k = 0; k < p.size(); ++k) p(k) = u(rng);  // positive weights and biases
  const Eigen::VectorXd g0 = input_gradient<double>(arch, p, Eigen::VectorXd::Constant(3, 0.2));
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd x = (Eigen::VectorXd::Random(3).array() + 1.0).matrix();  // positive inputs
    CHECK((input_gradient<double>(arch, p, x) - g0).cwiseAbs().maxCoeff() <= 1e-14);
    const double y = forward<double>(arch, p, x);
    const double affine = forward<double>(arch, p, Eigen::VectorXd::Zero(3)) + g0.dot(x);
    CHECK(y == doctest::Approx(affine).epsilon(1e-13));
  }
}

TEST_CASE("param gradient at the loss minimum is zero") {
  Architecture arch = linear_arch();
  ParameterVector p = ParameterVector::Zero(4);
  Eigen::MatrixXd rows(1, 1);
  rows << 1.0;
  Eigen::VectorXd y(1);
  y << 0.0;
  const Eigen::VectorXd g = param_gradient<double>(arch, p, rows, y);
  CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("param gradient of a single linear layer") {
  // 1 -> identity(1) -> 1 with W1 = 1, b1 = 0: d/dW2 = 2 (pred - y) x, d/db2 = 2 (pred - y)
  Architecture arch = linear_arch();
  const ParameterVector p = linear_params(2.0, 1.0);
  Eigen::MatrixXd rows(1, 1);
  rows << 3.0;
  Eigen::VectorXd y(1);
  y << 4.0;
  double loss = 0.0;
  const Eigen::VectorXd g = param_gradient<double>(arch, p, rows, y, Loss::mse, &loss);
  const double r = 7.0 - 4.0;
  CHECK(loss == doctest::Approx(r * r));
  CHECK(g(2) == doctest::Approx(2.0 * r * 3.0));
  CHECK(g(3) == doctest::Approx(2.0 * r));
}

TEST_CASE("param gradient matches finite differences") {
  Rng rng(19);
  Architecture arch{6, {8, 8, 8}, Activation::tanh};
  const ParameterVector p = random_params(arch, rng, 0.5);
  const Eigen::MatrixXd rows = uniform_matrix(16, 6, -1.0, 1.0, rng);
  const Eigen::VectorXd y = Eigen::VectorXd::Random(16);
  const Eigen::VectorXd g = param_gradient<double>(arch, p, rows, y);
  auto loss = [&](const ParameterVector& q) { return (forward_batch<double>(arch, q, rows) - y).squaredNorm() / 16.0; };
  std::uniform_int_distribution<Index> pick(0, p.size() - 1);
  for (int k = 0; k < 20; ++k) {
    const Index i = pick(rng);
    ParameterVector plus = p, minus = p;
    plus(i) += 1e-6;
    minus(i) -= 1e-6;
    const double fd = (loss(plus) - loss(minus)) / 2e-6;
    CHECK(relative_error(g(i), fd, 1e-6) <= 1e-4);
  }
}

TEST_CASE("param gradient rejects an empty batch") {
  Architecture arch{2, {3}, Activation::relu};
  const ParameterVector p = ParameterVector::Zero(arch.parameter_count());
  CHECK_THROWS_AS(param_gradient<double>(arch, p, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0)), std::invalid_argument);
}
