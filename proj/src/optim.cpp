#include "trace/optim.hpp"

#include <cmath>

namespace trace {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "rmsprop"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "rmsprop") return OptimizerKind::rmsprop;
  throw ConfigError("unknown optimizer '" + name + "'");
}

namespace {

void init_state(std::vector<RowMatrixd>& state, const ParameterSet& params) {
  if (state.size() == params.size()) return;
  state.clear();
  for (const auto& e : params.entries()) state.push_back(RowMatrixd::Zero(e.tensor.rows(), e.tensor.cols()));
}

}  // namespace

void Adam::step(ParameterSet& params, double lr) {
  init_state(m_, params);
  init_state(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].tensor;
    if (!p.has_grad()) continue;
    RowMatrixd g = p.grad();
    if (options_.weight_decay != 0.0) g += options_.weight_decay * p.value();
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    p.mutable_value().array() -= lr * m_hat / (v_hat.sqrt() + options_.eps);
  }
}

void RmsProp::step(ParameterSet& params, double lr) {
  init_state(square_avg_, params);
  init_state(momentum_buf_, params);
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& p = entries[i].tensor;
    RowMatrixd g = p.has_grad() ? p.grad() : RowMatrixd::Zero(p.rows(), p.cols());
    if (options_.weight_decay != 0.0) g += options_.weight_decay * p.value();
    square_avg_[i] = options_.alpha * square_avg_[i] + (1.0 - options_.alpha) * g.cwiseAbs2();
    const RowMatrixd update = (g.array() / (square_avg_[i].array().sqrt() + options_.eps)).matrix();
    if (options_.momentum > 0.0) {
      momentum_buf_[i] = options_.momentum * momentum_buf_[i] + update;
      p.mutable_value() -= lr * momentum_buf_[i];
    } else {
      p.mutable_value() -= lr * update;
    }
  }
}

PlateauScheduler::PlateauScheduler(double initial_lr, Options options) : options_(options), lr_(initial_lr) {
  if (!(options_.factor > 0.0 && options_.factor < 1.0)) throw ConfigError("plateau factor must lie in (0, 1)");
  if (options_.patience < 0) throw ConfigError("plateau patience must be >= 0");
}

double PlateauScheduler::step(double metric) {
  if (metric > best_ + options_.min_delta) {
    best_ = metric;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (bad_epochs_ > options_.patience) {
    lr_ *= options_.factor;
    ++reductions_;
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace trace
