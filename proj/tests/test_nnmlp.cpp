#include <doctest.h>

#include "support.hpp"
#include "trace/focal_loss.hpp"
#include "trace/gradcheck.hpp"
#include "trace/nnmlp.hpp"

using namespace trace;
using testing::random_matrix;

namespace {

Tensor scalar_param(double v) { return Tensor::parameter(Shape{1}, RowMatrixd::Constant(1, 1, v)); }

NnMlpParams random_feasible(Index d, Index h1, Index h2, std::mt19937_64& rng) {
  NnMlpParams p;
  p.w1 = Tensor::parameter(random_matrix(d, h1, rng, 0, 1));
  p.b1 = Tensor::parameter(Shape{h1}, random_matrix(1, h1, rng, -0.5, 0));
  p.w2 = Tensor::parameter(random_matrix(h1, h2, rng, 0, 1));
  p.b2 = Tensor::parameter(Shape{h2}, random_matrix(1, h2, rng, -0.5, 0));
  p.w3 = Tensor::parameter(random_matrix(h2, 1, rng, 0, 1));
  p.b3 = Tensor::parameter(Shape{1}, random_matrix(1, 1, rng, -2, 2));
  return p;
}

}  // namespace

TEST_CASE("hand-evaluated forward") {
  NnMlpParams p;
  p.w1 = Tensor::parameter(RowMatrixd::Constant(1, 1, 1.0));
  p.b1 = scalar_param(-0.5);
  p.w2 = Tensor::parameter(RowMatrixd::Constant(1, 1, 2.0));
  p.b2 = scalar_param(-0.1);
  p.w3 = Tensor::parameter(RowMatrixd::Constant(1, 1, 1.0));
  p.b3 = scalar_param(0.0);
  Tape tape(Tape::Mode::inference);
  auto y = nnmlp_forward(tape, Tensor::constant(RowMatrixd::Constant(1, 1, 1.0)), p);
  CHECK(y.value()(0, 0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(stable_sigmoid(y.value()(0, 0)) == doctest::Approx(1.0 / (1.0 + std::exp(-0.9))).epsilon(1e-15));
  CHECK(std::abs(stable_sigmoid(y.value()(0, 0)) - 0.71095) < 5e-6);
}

TEST_CASE("zero input gives the baseline risk") {
  std::mt19937_64 rng(1);
  auto p = random_feasible(5, 4, 3, rng);
  Tape tape(Tape::Mode::inference);
  auto y = nnmlp_forward(tape, Tensor::constant(RowMatrixd::Zero(3, 5)), p);
  for (Index i = 0; i < 3; ++i) {
    CHECK(y.value()(i, 0) == p.b3.value()(0, 0));
    CHECK(stable_sigmoid(y.value()(i, 0)) == baseline_risk(p));
  }
  p.b3.mutable_value()(0, 0) = 0.0;
  CHECK(baseline_risk(p) == 0.5);
  p.b3.mutable_value()(0, 0) = -800.0;
  CHECK(baseline_risk(p) == 0.0);
}

TEST_CASE("all-zero weights give probability one half") {
  std::mt19937_64 rng(2);
  auto p = random_feasible(3, 2, 2, rng);
  for (auto* t : {&p.w1, &p.w2, &p.w3, &p.b3}) t->mutable_value().setZero();
  Tape tape(Tape::Mode::inference);
  auto y = nnmlp_forward(tape, Tensor::constant(random_matrix(4, 3, rng, 0, 5)), p);
  CHECK((y.value().array() == 0.0).all());
}

TEST_CASE("negative input is rejected") {
  std::mt19937_64 rng(3);
  auto p = random_feasible(2, 2, 2, rng);
  RowMatrixd x = RowMatrixd::Ones(2, 2);
  x(1, 0) = -1e-12;
  Tape tape;
  CHECK_THROWS_AS(nnmlp_forward(tape, Tensor::constant(x), p), ContractError);
}

TEST_CASE("projection clamps and is idempotent") {
  std::mt19937_64 rng(4);
  auto p = random_feasible(3, 2, 2, rng);
  p.w1.mutable_value()(0, 0) = -0.3;
  p.b1.mutable_value()(0, 1) = 0.2;
  p.w3.mutable_value()(1, 0) = -1.0;
  p.b3.mutable_value()(0, 0) = -5.0;
  CHECK_FALSE(satisfies_constraints(p));
  project_constraints(p);
  CHECK(satisfies_constraints(p));
  CHECK(p.w1.value()(0, 0) == 0.0);
  CHECK(p.b1.value()(0, 1) == 0.0);
  CHECK(p.w3.value()(1, 0) == 0.0);
  CHECK(p.b3.value()(0, 0) == -5.0);
  const auto w2 = p.w2.value(), b2 = p.b2.value();
  project_constraints(p);
  CHECK(p.w2.value() == w2);
  CHECK(p.b2.value() == b2);
  CHECK(p.w1.value()(0, 0) == 0.0);
}

TEST_CASE("output is monotone in every input") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto p = random_feasible(6, 5, 4, rng);
    RowMatrixd x = random_matrix(1, 6, rng, 0, 2);
    RowMatrixd xp = x;
    for (Index j = 0; j < 6; ++j)
      if (u(rng) < 0.5) xp(0, j) += u(rng);
    Tape tape(Tape::Mode::inference);
    const double a = nnmlp_forward(tape, Tensor::constant(x), p).value()(0, 0);
    const double b = nnmlp_forward(tape, Tensor::constant(xp), p).value()(0, 0);
    violations += a > b;
  }
  CHECK(violations == 0);
}

TEST_CASE("focal loss gradient through the network") {
  std::mt19937_64 rng(6);
  auto p = random_feasible(5, 4, 3, rng);
  const RowMatrixd x = random_matrix(4, 5, rng, 0, 1);
  Eigen::VectorXi y(4);
  y << 1, 0, 0, 1;
  const double err = finite_diff_check<double>(
      [&](Tape& t) { return focal_loss(t, nnmlp_forward(t, Tensor::constant(x), p), y, 0.8, 2.0); },
      {p.w1, p.b1, p.w2, p.b2, p.w3, p.b3});
  CHECK(err < 1e-4);
}

TEST_CASE("model design matrix and initialization") {
  std::mt19937_64 rng(7);
  const auto schema = testing::toy_schema();
  auto data = testing::random_dataset(schema, 12, rng, 0.2);
  auto floor = continuous_floor(data);
  NnMlpModel m(schema, NnMlpConfig{8, 6}, floor, 0.25, 3);
  CHECK(satisfies_constraints(m.layers()));
  CHECK(m.layers().b3.value()(0, 0) == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-12));
  CHECK(m.layers().w1.shape() == Shape{one_hot_width(schema), 8});
  auto x = m.design(data);
  CHECK(x.minCoeff() >= 0.0);
  CHECK(x.cols() == one_hot_width(schema));
  for (Index i = 0; i < data.size(); ++i) {
    if (data.continuous_missing(i, 0)) CHECK(x(i, 0) == 0.0);
    else CHECK(x(i, 0) == data.continuous(i, 0) - floor(0));
  }
  CHECK(m.predict_logits(data).size() == 12);

  NnMlpModel again(schema, NnMlpConfig{8, 6}, floor, 0.25, 3);
  CHECK(again.predict_logits(data) == m.predict_logits(data));
  CHECK_THROWS_AS(NnMlpModel(schema, NnMlpConfig{8, 6}, Eigen::VectorXd::Zero(2), 0.25, 3), ContractError);
  CHECK_THROWS_AS(NnMlpConfig({0, 4}).validate(), ConfigError);
}

TEST_CASE("model gradient on the toy schema") {
  std::mt19937_64 rng(8);
  const auto schema = testing::toy_schema();
  auto data = testing::random_dataset(schema, 4, rng, 0.25);
  NnMlpModel m(schema, NnMlpConfig{6, 5}, continuous_floor(data), 0.5, 4);
  std::vector<Tensor> inputs;
  for (auto& e : m.parameters().entries()) inputs.push_back(e.tensor);
  const double err = finite_diff_check<double>(
      [&](Tape& t) { return focal_loss(t, m.forward(t, data), data.labels, 0.5, 2.0); }, inputs);
  CHECK(err < 1e-4);
}
