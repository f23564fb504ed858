#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "trace/tensor.hpp"

namespace trace {

/// Scalar objective rebuilt from scratch on the supplied tape.
template <typename Scalar>
using BasicObjective = std::function<BasicTensor<Scalar>(BasicTape<Scalar>&)>;

/// Compares reverse-mode gradients of `objective` with respect to every
/// entry of `inputs` against central differences
///   (f(x + h e_i) - f(x - h e_i)) / (2h)
/// and returns the largest relative error, using max(|a|, |b|, 1e-8) as the
/// denominator. Inputs are made trainable for the duration of the check and
/// their values are restored exactly.
template <typename Scalar>
Scalar finite_diff_check(const BasicObjective<Scalar>& objective, std::vector<BasicTensor<Scalar>> inputs,
                         Scalar h = Scalar{1e-5}) {
  if (!(h >= Scalar{1e-6} && h <= Scalar{1e-3})) {
    throw ParameterError("finite_diff_check: step must lie in [1e-6, 1e-3]");
  }
  std::vector<bool> was_trainable;
  for (auto& x : inputs) {
    was_trainable.push_back(x.trainable());
    x.set_trainable(true);
    x.zero_grad();
  }

  std::vector<RowMatrix<Scalar>> analytic;
  {
    BasicTape<Scalar> tape;
    auto loss = objective(tape);
    tape.backward(loss);
    for (auto& x : inputs) {
      x.ensure_grad();
      analytic.push_back(x.grad());
    }
  }

  auto evaluate = [&] {
    BasicTape<Scalar> tape(BasicTape<Scalar>::Mode::inference);
    return objective(tape).item();
  };

  Scalar worst{0};
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto& values = inputs[t].mutable_value();
    for (Index i = 0; i < values.size(); ++i) {
      const Scalar saved = values.data()[i];
      const Scalar plus = saved + h, minus = saved - h;
      values.data()[i] = plus;
      const Scalar up = evaluate();
      values.data()[i] = minus;
      const Scalar down = evaluate();
      values.data()[i] = saved;
      // plus - minus is the step actually taken, which differs from 2h by rounding.
      const Scalar numeric = (up - down) / (plus - minus);
      const Scalar a = analytic[t].data()[i];
      const Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar{1e-8}});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    inputs[t].zero_grad();
    inputs[t].set_trainable(was_trainable[t]);
  }
  return worst;
}

template <typename Scalar>
Scalar finite_diff_check(const std::function<BasicTensor<Scalar>(BasicTape<Scalar>&, const BasicTensor<Scalar>&)>& f,
                         BasicTensor<Scalar> x, Scalar h = Scalar{1e-5}) {
  BasicObjective<Scalar> objective = [&f, x](BasicTape<Scalar>& tape) { return f(tape, x); };
  return finite_diff_check<Scalar>(objective, std::vector<BasicTensor<Scalar>>{x}, h);
}

}  // namespace trace
