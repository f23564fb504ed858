#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "trace/gradcheck.hpp"
#include "trace/tensor.hpp"

using namespace trace;
using testing::away_from_zero;
using testing::random_matrix;

namespace {

// Weighted sum so every output entry carries a distinct, O(1) gradient.
Tensor weighted_sum(Tape& tape, const Tensor& y, const RowMatrixd& w) {
  return sum(tape, mul(tape, y, Tensor(y.shape(), w)));
}

RowMatrixd row(std::initializer_list<double> v) {
  RowMatrixd m(1, static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("matmul values") {
  Tape tape;
  RowMatrixd eye = RowMatrixd::Identity(2, 2), col(2, 1);
  col << 2, 3;
  auto y = matmul(tape, Tensor::constant(eye), Tensor::constant(col));
  CHECK(y.value() == col);
  RowMatrixd a = row({1, 2}), b(2, 1);
  b << 3, 4;
  CHECK(matmul(tape, Tensor::constant(a), Tensor::constant(b)).item() == 11.0);
  CHECK_THROWS_AS(matmul(tape, Tensor::constant(a), Tensor::constant(a)), ContractError);
}

TEST_CASE("matmul gradient of sum(xW) is x transposed") {
  std::mt19937_64 rng(1);
  Tape tape;
  auto x = Tensor::constant(row({1, 2}));
  auto w = Tensor::parameter(random_matrix(2, 1, rng));
  auto loss = sum(tape, matmul(tape, x, w));
  tape.backward(loss);
  CHECK(w.grad()(0, 0) == 1.0);
  CHECK(w.grad()(1, 0) == 2.0);
  CHECK_FALSE(x.has_grad());
}

TEST_CASE("activation values") {
  Tape tape;
  auto x = Tensor::constant(row({-1, 0, 2}));
  CHECK(activation(tape, x, Activation::relu).value() == row({0, 0, 2}));
  CHECK(activation(tape, Tensor::constant(row({0})), Activation::sigmoid).item() == 0.5);
  CHECK(activation(tape, Tensor::constant(row({1})), Activation::selu).item() == doctest::Approx(1.05070099).epsilon(1e-8));
  const double neg = activation(tape, Tensor::constant(row({-1})), Activation::selu).item();
  CHECK(neg == doctest::Approx(kSeluLambda * kSeluAlpha * (std::exp(-1.0) - 1.0)).epsilon(1e-14));
  CHECK(parse_activation("selu") == Activation::selu);
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("relu derivative at zero is zero") {
  Tape tape;
  auto x = Tensor::parameter(row({0.0, 1.0}));
  auto loss = sum(tape, activation(tape, x, Activation::relu));
  tape.backward(loss);
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 1.0);
}

TEST_CASE("softmax rows") {
  Tape tape;
  CHECK(softmax_rows(tape, Tensor::constant(row({0, 0}))).value() == row({0.5, 0.5}));
  CHECK(softmax_rows(tape, Tensor::constant(row({1000, 1000}))).value() == row({0.5, 0.5}));
  auto p = softmax_rows(tape, Tensor::constant(row({std::log(1.0), std::log(3.0)}))).value();
  CHECK(p(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.75).epsilon(1e-15));

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    RowMatrixd x = random_matrix(6, 5, rng, -20.0, 20.0);
    const double c = std::uniform_real_distribution<double>(-50.0, 50.0)(rng);
    auto a = softmax_rows(tape, Tensor::constant(x)).value();
    RowMatrixd shifted = x.array() + c;
    auto b = softmax_rows(tape, Tensor::constant(shifted)).value();
    CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("layer norm values") {
  Tape tape;
  auto ones = Tensor::constant(row({1, 1}));
  auto zeros = Tensor::constant(row({0, 0}));
  auto y = layer_norm(tape, Tensor::constant(row({1, 1, 1, 1})), Tensor::constant(row({1, 1, 1, 1})),
                      Tensor::constant(row({0, 0, 0, 0})));
  CHECK(y.value() == RowMatrixd::Zero(1, 4));
  auto z = layer_norm(tape, Tensor::constant(row({-1, 1})), ones, zeros, 1e-300);
  CHECK(z.value()(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(z.value()(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  auto c = layer_norm(tape, Tensor::constant(row({3, -7})), zeros, Tensor::constant(row({2.5, 2.5})));
  CHECK(c.value() == row({2.5, 2.5}));
  CHECK_THROWS_AS(layer_norm(tape, ones, ones, zeros, 0.0), ContractError);
}

TEST_CASE("backward examples") {
  Tape tape;
  auto x = Tensor::parameter(row({1, 2}));
  auto loss = sum(tape, mul(tape, x, x));
  tape.backward(loss);
  CHECK(x.grad() == row({2, 4}));
  CHECK(tape.size() == 0);

  Tape t2;
  auto w = Tensor::parameter(row({0}));
  auto s = activation(t2, w, Activation::sigmoid);
  t2.backward(s);
  CHECK(w.grad()(0, 0) == 0.25);

  Tape t3;
  auto v = Tensor::parameter(row({1, 2}));
  auto not_scalar = scale(t3, v, 2.0);
  CHECK_THROWS_AS(t3.backward(not_scalar), ContractError);
}

TEST_CASE("non-trainable tensors receive no gradient") {
  Tape tape;
  auto a = Tensor::constant(row({1, 2}));
  auto b = Tensor::parameter(row({3, 4}));
  auto loss = sum(tape, mul(tape, a, b));
  tape.backward(loss);
  CHECK_FALSE(a.has_grad());
  CHECK(b.grad() == row({1, 2}));
}

TEST_CASE("inference tape records nothing") {
  Tape tape(Tape::Mode::inference);
  auto w = Tensor::parameter(row({1, 2}));
  auto y = sum(tape, mul(tape, w, w));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.item() == 5.0);
}

TEST_CASE("finite_diff_check contract") {
  std::mt19937_64 rng(3);
  auto x = Tensor::constant(random_matrix(3, 4, rng));
  std::function<Tensor(Tape&, const Tensor&)> linear = [](Tape& t, const Tensor& v) { return sum(t, v); };
  CHECK(finite_diff_check(linear, x, 1e-3) < 1e-10);
  auto away = Tensor::constant(away_from_zero(3, 4, rng));
  std::function<Tensor(Tape&, const Tensor&)> relu_sum = [](Tape& t, const Tensor& v) {
    return sum(t, activation(t, v, Activation::relu));
  };
  CHECK(finite_diff_check(relu_sum, away) < 1e-6);
  CHECK_THROWS_AS(finite_diff_check(linear, x, 1e-7), ParameterError);
  CHECK_THROWS_AS(finite_diff_check(linear, x, 1e-2), ParameterError);
  CHECK_FALSE(x.trainable());
}

TEST_CASE("primitive gradients match finite differences at 20 random points") {
  std::mt19937_64 rng(4);
  const double tol = 1e-4;
  for (int point = 0; point < 20; ++point) {
    CAPTURE(point);
    const RowMatrixd w = random_matrix(3, 4, rng);
    auto a = Tensor::constant(random_matrix(3, 5, rng));
    auto b = Tensor::constant(random_matrix(5, 4, rng));
    auto c = Tensor::constant(random_matrix(3, 4, rng));
    auto d = Tensor::constant(random_matrix(3, 4, rng));
    auto bias = Tensor::constant(random_matrix(1, 4, rng));
    auto kinked = Tensor::constant(away_from_zero(3, 4, rng));

    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, matmul(t, a, b), w); }, {a, b}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, add_bias(t, c, bias), w); }, {c, bias}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, add(t, c, d), w); }, {c, d}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, mul(t, c, d), w); }, {c, d}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, scale(t, c, -1.7), w); }, {c}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return mean(t, mul(t, c, c)); }, {c}) < tol);
    for (auto kind : {Activation::relu, Activation::selu, Activation::sigmoid}) {
      CAPTURE(to_string(kind));
      CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, activation(t, kinked, kind), w); },
                                      {kinked}) < tol);
    }
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, softmax_rows(t, c), w); }, {c}) < tol);
    auto gain = Tensor::constant(random_matrix(1, 4, rng, 0.5, 1.5));
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, layer_norm(t, c, gain, bias), w); },
                                    {c, gain, bias}) < tol);
    const std::vector<bool> keep{true, false, true};
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, mask_rows(t, c, keep), w); }, {c}) < tol);
    auto table = Tensor::constant(random_matrix(5, 4, rng));
    CHECK(finite_diff_check<double>(
              [&](Tape& t) { return weighted_sum(t, embedding_lookup(t, table, {4, 0, 4}), w); }, {table}) < tol);

    // Token-axis ops on (B=2, N=3, E=2) tensors.
    auto t1 = Tensor(Shape{2, 3, 2}, random_matrix(6, 2, rng));
    auto t2 = Tensor(Shape{2, 1, 2}, random_matrix(2, 2, rng));
    auto t3 = Tensor(Shape{2, 2}, random_matrix(2, 2, rng));
    const RowMatrixd wc = random_matrix(10, 2, rng), wm = random_matrix(2, 2, rng);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, concat_tokens(t, {t1, t2, t3}), wc); },
                                    {t1, t2, t3}) < tol);
    CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, mean_tokens(t, t1), wm); }, {t1}) < tol);

    auto q = Tensor(Shape{2, 3, 4}, random_matrix(6, 4, rng));
    auto k = Tensor(Shape{2, 3, 4}, random_matrix(6, 4, rng));
    auto v = Tensor(Shape{2, 3, 4}, random_matrix(6, 4, rng));
    const RowMatrixd wa = random_matrix(6, 4, rng);
    for (int heads : {1, 2}) {
      CHECK(finite_diff_check<double>([&](Tape& t) { return weighted_sum(t, attention(t, q, k, v, heads), wa); },
                                      {q, k, v}) < tol);
    }
  }
}

TEST_CASE("mask_rows writes exact zeros and blocks gradient") {
  Tape tape;
  RowMatrixd x(2, 2);
  x << 1, 2, std::nan(""), 4;
  auto p = Tensor::parameter(x);
  auto y = mask_rows(tape, p, {true, false});
  CHECK(y.value()(1, 0) == 0.0);
  CHECK(y.value()(1, 1) == 0.0);
  auto loss = sum(tape, y);
  tape.backward(loss);
  RowMatrixd expected(2, 2);
  expected << 1, 1, 0, 0;
  CHECK(p.grad() == expected);
}

TEST_CASE("attention capture rows are stochastic") {
  std::mt19937_64 rng(5);
  Tape tape(Tape::Mode::inference);
  auto q = Tensor(Shape{3, 4, 6}, random_matrix(12, 6, rng, -3, 3));
  BasicAttentionWeights<double> capture;
  auto out = attention(tape, q, q, q, 3, &capture);
  CHECK(out.shape() == Shape{3, 4, 6});
  REQUIRE(capture.heads.size() == 3);
  for (const auto& h : capture.heads) {
    CHECK(h.rows() == 12);
    CHECK(h.cols() == 4);
    CHECK((h.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS_AS(attention(tape, q, q, q, 4), ContractError);
}

TEST_CASE("identical seeds give bit-identical passes") {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tape tape;
    auto w = Tensor::parameter(random_matrix(4, 3, rng));
    auto x = Tensor::constant(random_matrix(5, 4, rng));
    auto y = activation(tape, matmul(tape, x, w), Activation::selu);
    auto loss = mean(tape, softmax_rows(tape, y));
    tape.backward(loss);
    return std::pair{loss.item(), RowMatrixd(w.grad())};
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("dropout is identity at rate zero and scales kept units") {
  std::mt19937_64 rng(6);
  Tape tape;
  auto x = Tensor::constant(RowMatrixd::Ones(4, 50));
  CHECK(dropout(tape, x, 0.0, rng).value() == x.value());
  auto y = dropout(tape, x, 0.5, rng).value();
  for (Index i = 0; i < y.size(); ++i) CHECK((y.data()[i] == 0.0 || y.data()[i] == 2.0));
  CHECK_THROWS_AS(dropout(tape, x, 1.0, rng), ConfigError);
}

TEST_CASE("shape checks") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}, RowMatrixd(0, 0)), ContractError);
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, RowMatrixd::Zero(3, 2)), ContractError);
  CHECK(shape_size(Shape{2, 3, 4}) == 24);
  CHECK(shape_string(Shape{2, 3}) == "(2,3)");
}
