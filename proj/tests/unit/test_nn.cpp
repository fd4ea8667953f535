#include "gradcheck.hpp"
#include "oracles.hpp"

#include "seqgan/error.hpp"
#include "seqgan/nn.hpp"
#include "seqgan/random.hpp"

#include <doctest.h>

#include <bit>

using namespace seqgan;
using namespace seqgan::nn;

namespace {

DenseLayer identity_dense(Eigen::Index dim) {
  DenseLayer d(dim, dim);
  d.weights = Matrix::Identity(dim, dim);
  return d;
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sd = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  return m;
}

Matrix one_hot_targets(Rng& rng, Eigen::Index rows, Eigen::Index classes) {
  Matrix y = Matrix::Zero(rows, classes);
  for (Eigen::Index i = 0; i < rows; ++i) y(i, static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(classes)))) = 1.0;
  return y;
}

Matrix binary_targets(Rng& rng, Eigen::Index rows) {
  Matrix y(rows, 1);
  for (Eigen::Index i = 0; i < rows; ++i) y(i, 0) = static_cast<double>(rng.index(2));
  return y;
}

}  // namespace

TEST_CASE("forward: identity dense layer passes its input through") {
  DenseLayer dense(3, 3);
  dense.weights = Matrix::Identity(3, 3);
  Network net({dense}, Head::Identity);
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 0, -7;
  CHECK(net.forward(x, Mode::Eval) == x);
  CHECK(net.infer(x) == x);
}

TEST_CASE("forward: hand-computed two-layer ReLU net") {
  // h = relu(W1 x + b1), out = W2 h + b2 with x = (1, 2).
  DenseLayer l1(2, 2), l2(2, 1);
  l1.weights << 1, -1, 2, 1;  // rows: (1,-1), (2,1)
  l1.bias << 0.5, -1;
  l2.weights << 3, -2;
  l2.bias << 1;
  Network net({l1, ReluLayer{}, l2}, Head::Identity);
  Matrix x(1, 2);
  x << 1, 2;
  // pre = (1 - 2 + 0.5, 2 + 2 - 1) = (-0.5, 3); relu = (0, 3); out = 0 - 6 + 1 = -5
  CHECK(net.forward(x, Mode::Eval)(0, 0) == doctest::Approx(-5.0));
}

TEST_CASE("heads: softmax rows sum to one and are shift invariant; sigmoid in (0,1)") {
  Rng rng(3);
  const Matrix logits = random_matrix(rng, 20, 6, 5.0);
  const Matrix p = apply_head(logits, Head::Softmax);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    CHECK(std::abs(p.row(i).sum() - 1.0) <= 1e-9);
    CHECK(p.row(i).minCoeff() >= 0.0);
  }
  Matrix shifted = logits;
  for (Eigen::Index i = 0; i < shifted.rows(); ++i) shifted.row(i).array() += rng.normal(0.0, 100.0);
  CHECK((apply_head(shifted, Head::Softmax) - p).cwiseAbs().maxCoeff() <= 1e-12);

  const Matrix s = apply_head(random_matrix(rng, 50, 1, 10.0), Head::Sigmoid);
  CHECK(s.minCoeff() > 0.0);
  CHECK(s.maxCoeff() < 1.0);

  NetworkSpec spec{7, {16, 8}, 5, Head::Softmax, true};
  auto net = Network::build(spec, 9);
  const Matrix out = net.forward(random_matrix(rng, 12, 7), Mode::Train);
  for (Eigen::Index i = 0; i < out.rows(); ++i) CHECK(std::abs(out.row(i).sum() - 1.0) <= 1e-9);
}

TEST_CASE("batchnorm: train-mode output is standardized per feature") {
  Rng rng(5);
  Network net({identity_dense(4), BatchNormLayer(4)}, Head::Identity);
  Matrix x = random_matrix(rng, 64, 4, 3.0);
  x.col(2).array() += 10.0;
  const Matrix out = net.forward(x, Mode::Train);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const double mean = out.col(j).mean();
    const double var = (out.col(j).array() - mean).square().mean();
    CHECK(std::abs(mean) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("batchnorm: running statistics drive eval mode") {
  Rng rng(6);
  Network net({identity_dense(2), BatchNormLayer(2)}, Head::Identity);
  const Matrix x = random_matrix(rng, 10, 2, 2.0);
  net.forward(x, Mode::Train);
  const auto& bn = std::get<BatchNormLayer>(net.layers()[1]);
  const RowVector mean = x.colwise().mean();
  const RowVector unbiased = (x.rowwise() - mean).array().square().colwise().sum() / 9.0;
  for (Eigen::Index j = 0; j < 2; ++j) {
    CHECK(bn.running_mean[j] == doctest::Approx(0.1 * mean[j]));
    CHECK(bn.running_var[j] == doctest::Approx(0.9 + 0.1 * unbiased[j]));
    CHECK(bn.running_var[j] >= 0.0);
  }
  const Matrix q = random_matrix(rng, 3, 2);
  const Matrix out = net.forward(q, Mode::Eval);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      CHECK(out(i, j) == doctest::Approx((q(i, j) - bn.running_mean[j]) / std::sqrt(bn.running_var[j] + 1e-5)));
    }
  }
  CHECK(net.infer(q) == out);
}

TEST_CASE("backward: single sigmoid unit closed form") {
  DenseLayer unit(1, 1);  // w = 0, b = 0
  Network net({unit}, Head::Sigmoid);
  Matrix x(1, 1), y(1, 1);
  x << 1.0;
  y << 1.0;
  CHECK(net.forward(x, Mode::Train)(0, 0) == 0.5);
  const double loss = net.backward_loss(y, Loss::BinaryCrossEntropy);
  CHECK(loss == doctest::Approx(std::log(2.0)));
  const auto& dense = std::get<DenseLayer>(net.layers()[0]);
  CHECK(dense.grad_bias[0] == doctest::Approx(-0.5));
  CHECK(dense.grad_weights(0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("backward: perfect prediction gives clamp-level loss and tiny gradients") {
  DenseLayer unit(1, 1);
  unit.bias << 40.0;  // sigmoid(40) rounds to 1 - 4e-18
  Network net({unit}, Head::Sigmoid);
  Matrix x = Matrix::Zero(4, 1), y = Matrix::Ones(4, 1);
  net.forward(x, Mode::Train);
  const double loss = net.backward_loss(y, Loss::BinaryCrossEntropy);
  CHECK(loss <= -std::log(1.0 - kProbabilityClamp) + 1e-15);
  CHECK(std::abs(std::get<DenseLayer>(net.layers()[0]).grad_bias[0]) <= 1e-12);
}

TEST_CASE("loss is finite for any input thanks to clamping") {
  Matrix p(2, 2), y(2, 2);
  p << 0.0, 1.0, 1.0, 0.0;
  y << 1.0, 0.0, 0.0, 1.0;
  CHECK(std::isfinite(loss_value(p, y, Loss::BinaryCrossEntropy)));
  CHECK(std::isfinite(loss_value(p, y, Loss::CategoricalCrossEntropy)));
  CHECK(loss_value(p, y, Loss::CategoricalCrossEntropy) == doctest::Approx(-std::log(kProbabilityClamp)));
}

TEST_CASE("gradient check: random nets, both losses, batchnorm in train mode") {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto in = static_cast<std::size_t>(2 + rng.index(6));
    std::vector<std::size_t> hidden;
    const auto depth = rng.index(3);  // 0-2 hidden layers, so at most 3 dense layers
    for (std::uint64_t d = 0; d < depth; ++d) hidden.push_back(static_cast<std::size_t>(2 + rng.index(15)));
    const bool softmax = trial % 2 == 0;
    const auto out = softmax ? static_cast<std::size_t>(2 + rng.index(4)) : std::size_t{1};
    auto net = Network::build({in, hidden, out, softmax ? Head::Softmax : Head::Sigmoid, true}, rng.next());
    const auto batch = static_cast<Eigen::Index>(4 + rng.index(8));
    const Matrix x = random_matrix(rng, batch, static_cast<Eigen::Index>(in));
    const Matrix y = softmax ? one_hot_targets(rng, batch, static_cast<Eigen::Index>(out)) : binary_targets(rng, batch);
    const double err = gradcheck::gradient_check(net, x, y, softmax ? Loss::CategoricalCrossEntropy : Loss::BinaryCrossEntropy);
    CAPTURE(trial);
    CHECK(err <= 1e-4);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative gradient error: " << worst);
}

TEST_CASE("backward_from_logits with frozen parameters leaves gradients untouched") {
  Rng rng(1);
  auto net = Network::build({3, {4}, 1, Head::Sigmoid, true}, 5);
  const Matrix x = random_matrix(rng, 6, 3);
  net.forward(x, Mode::Train);
  net.backward_loss(binary_targets(rng, 6), Loss::BinaryCrossEntropy);
  std::vector<double> before;
  for (const auto& b : net.parameters()) before.insert(before.end(), b.grad.begin(), b.grad.end());
  net.forward(x, Mode::Train);
  const Matrix gi = net.backward_from_logits(Matrix::Ones(6, 1), {.param_grads = false, .input_grad = true});
  CHECK(gi.rows() == 6);
  CHECK(gi.cols() == 3);
  std::vector<double> after;
  for (const auto& b : net.parameters()) after.insert(after.end(), b.grad.begin(), b.grad.end());
  CHECK(before == after);
}

TEST_CASE("backward_loss checks the head/loss pairing and shapes") {
  auto net = Network::build({3, {4}, 2, Head::Softmax, true}, 1);
  net.forward(Matrix::Ones(2, 3), Mode::Train);
  CHECK_THROWS_AS(net.backward_loss(Matrix::Zero(2, 2), Loss::BinaryCrossEntropy), ConfigError);
  CHECK_THROWS_AS(net.backward_loss(Matrix::Zero(3, 2), Loss::CategoricalCrossEntropy), ShapeError);
  CHECK_THROWS(net.forward(Matrix::Ones(2, 4), Mode::Train));
}

TEST_CASE("forward: overflow is reported with the layer") {
  DenseLayer dense(1, 1);
  dense.weights << 1e300;
  Network net({dense}, Head::Identity);
  Matrix x(1, 1);
  x << 1e300;
  try {
    net.forward(x, Mode::Eval);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  x << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(net.forward(x, Mode::Eval), NumericError);
}

TEST_CASE("adam: zero gradient is the identity and counts the step") {
  std::vector<double> value = {1.0, -2.0, 3.0}, grad = {0.0, 0.0, 0.0};
  AdamState adam(AdamConfig{});
  adam.step({ParamBlock{"p", value, grad}});
  CHECK(value == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam: first step has magnitude lr") {
  std::vector<double> value = {0.0, 0.0}, grad = {0.3, -5.0};
  AdamConfig cfg;
  cfg.lr = 0.01;
  AdamState adam(cfg);
  adam.step({ParamBlock{"p", value, grad}});
  // m_hat = g, v_hat = g^2, delta = -lr g / (|g| + eps)
  CHECK(value[0] == doctest::Approx(-0.01 * 0.3 / (0.3 + 1e-8)));
  CHECK(value[1] == doctest::Approx(0.01 * 5.0 / (5.0 + 1e-8)));
}

TEST_CASE("adam: two steps with constant gradient match a hand unroll") {
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.5;
  std::vector<double> value = {1.0}, grad = {g};
  AdamState adam(AdamConfig{lr, b1, b2, eps});
  adam.step({ParamBlock{"p", value, grad}});
  adam.step({ParamBlock{"p", value, grad}});

  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    x -= lr * mh / (std::sqrt(vh) + eps);
  }
  CHECK(value[0] == doctest::Approx(x).epsilon(1e-14));
  CHECK(adam.steps() == 2);
  CHECK(adam.second_moments()[0][0] >= 0.0);
}

TEST_CASE("checkpoint: network and optimizer round trip bit exactly") {
  Rng rng(8);
  auto net = Network::build({5, {8, 4}, 3, Head::Softmax, true}, 77);
  AdamState adam(AdamConfig{0.01, 0.9, 0.999, 1e-8});
  for (int i = 0; i < 3; ++i) {
    net.forward(random_matrix(rng, 8, 5), Mode::Train);
    net.backward_loss(one_hot_targets(rng, 8, 3), Loss::CategoricalCrossEntropy);
    adam.step(net.parameters());
  }
  const auto dir = oracle::scratch_dir("nn");
  save_checkpoint(dir / "net.ckpt", net, &adam, {{"note", "test"}});
  AdamState adam_back;
  nlohmann::json meta;
  const auto back = load_checkpoint(dir / "net.ckpt", &adam_back, &meta);
  CHECK(back == net);
  CHECK(meta["note"] == "test");
  CHECK(adam_back.steps() == adam.steps());
  CHECK(adam_back.first_moments() == adam.first_moments());
  CHECK(adam_back.second_moments() == adam.second_moments());
  const Matrix q = random_matrix(rng, 4, 5);
  const Matrix a = net.infer(q), b = back.infer(q);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(a.data()[i]) == std::bit_cast<std::uint64_t>(b.data()[i]));
  }
  CHECK(net.parameter_count() == back.parameter_count());
}

TEST_CASE("build: initialization scales and determinism") {
  const auto a = Network::build({200, {300}, 10, Head::Softmax, false}, 4);
  const auto b = Network::build({200, {300}, 10, Head::Softmax, false}, 4);
  CHECK(a == b);
  const auto& hidden = std::get<DenseLayer>(a.layers()[0]);
  const auto& head = std::get<DenseLayer>(a.layers().back());
  const double var_hidden = hidden.weights.array().square().mean();
  const double var_head = head.weights.array().square().mean();
  CHECK(var_hidden == doctest::Approx(2.0 / 200).epsilon(0.05));
  CHECK(var_head == doctest::Approx(1.0 / 300).epsilon(0.1));
  CHECK(hidden.bias.isZero());
}
