#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "trace/tensor.hpp"

namespace trace {

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

/// Lower clamp on log(1 - p_t) before raising to gamma.
inline constexpr double kFocalLogFloor = -80.0;

/// Per-sample focal loss  -alpha_t (1 - p_t)^gamma log(p_t)  evaluated from
/// the logit. With z = logit for positives and -logit for negatives,
/// log p_t = -softplus(-z) and log(1 - p_t) = -softplus(z).
inline double focal_term(double logit, int target, double alpha, double gamma) {
  const double z = target ? logit : -logit;
  const double alpha_t = target ? alpha : 1.0 - alpha;
  const double log_q = std::max(-softplus(z), kFocalLogFloor);
  return alpha_t * std::exp(gamma * log_q) * softplus(-z);
}

inline void check_focal_parameters(double alpha, double gamma) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("focal loss alpha must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw ParameterError("focal loss gamma must be >= 0");
}

/// Batch-mean focal loss of (B, 1) logits against 0/1 targets.
inline Tensor focal_loss(Tape& tape, const Tensor& logits, const Eigen::VectorXi& targets, double alpha, double gamma) {
  check_focal_parameters(alpha, gamma);
  if (logits.cols() != 1 || logits.rows() != targets.size())
    throw ContractError("focal_loss: logits must be (B, 1) with B targets");
  const Index n = targets.size();
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += focal_term(logits.value()(i, 0), targets(i), alpha, gamma);
  RowMatrixd value(1, 1);
  value(0, 0) = total / static_cast<double>(n);
  auto out = detail::make_result(tape, Shape{1}, std::move(value), logits.requires_grad());
  if (out.requires_grad()) {
    auto ln = logits.handle(), on = out.handle();
    tape.record([ln, on, targets, alpha, gamma, n] {
      if (ln->grad.size() != ln->value.size()) ln->grad = RowMatrixd::Zero(ln->value.rows(), ln->value.cols());
      const double upstream = on->grad(0, 0) / static_cast<double>(n);
      for (Index i = 0; i < n; ++i) {
        const int y = targets(i);
        const double s = ln->value(i, 0);
        const double z = y ? s : -s;
        const double alpha_t = y ? alpha : 1.0 - alpha;
        const double log_q = std::max(-softplus(z), kFocalLogFloor);
        const double q_gamma = std::exp(gamma * log_q);
        const double p_t = stable_sigmoid(z);
        const double q = std::exp(log_q);
        // d/dz of alpha_t q^gamma softplus(-z), with dq/dz = -p_t q.
        const double dz = -alpha_t * q_gamma * (gamma * p_t * softplus(-z) + q);
        ln->grad(i, 0) += upstream * (y ? dz : -dz);
      }
    });
  }
  return out;
}

}  // namespace trace
