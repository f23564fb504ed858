#include "trace/nnmlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trace {

void NnMlpConfig::validate() const {
  if (hidden1 < 1 || hidden2 < 1) throw ConfigError("nnMLP hidden sizes must be positive");
}

nlohmann::json NnMlpConfig::to_json() const { return {{"hidden1", hidden1}, {"hidden2", hidden2}}; }

NnMlpConfig NnMlpConfig::from_json(const nlohmann::json& j) {
  NnMlpConfig c;
  c.hidden1 = j.at("hidden1").get<Index>();
  c.hidden2 = j.at("hidden2").get<Index>();
  c.validate();
  return c;
}

Tensor nnmlp_forward(Tape& tape, const Tensor& x, const NnMlpParams& p) {
  if ((x.value().array() < 0.0).any()) throw ContractError("nnmlp_forward: inputs must be non-negative");
  auto z1 = activation(tape, add_bias(tape, matmul(tape, x, p.w1), p.b1), Activation::relu);
  auto z2 = activation(tape, add_bias(tape, matmul(tape, z1, p.w2), p.b2), Activation::relu);
  return add_bias(tape, matmul(tape, z2, p.w3), p.b3);
}

void project_constraints(NnMlpParams& p) {
  for (auto* w : {&p.w1, &p.w2, &p.w3}) w->mutable_value() = w->value().cwiseMax(0.0);
  for (auto* b : {&p.b1, &p.b2}) b->mutable_value() = b->value().cwiseMin(0.0);
}

bool satisfies_constraints(const NnMlpParams& p) {
  return p.w1.value().minCoeff() >= 0.0 && p.w2.value().minCoeff() >= 0.0 && p.w3.value().minCoeff() >= 0.0 &&
         p.b1.value().maxCoeff() <= 0.0 && p.b2.value().maxCoeff() <= 0.0;
}

double baseline_risk(const NnMlpParams& p) { return stable_sigmoid(p.b3.item()); }

Eigen::VectorXd continuous_floor(const TabularDataset& train) {
  const Index cols = train.continuous.cols();
  Eigen::VectorXd floor = Eigen::VectorXd::Zero(cols);
  for (Index i = 0; i < cols; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    for (Index r = 0; r < train.size(); ++r) {
      if (!train.continuous_missing(r, i)) lo = std::min(lo, train.continuous(r, i));
    }
    floor(i) = std::isfinite(lo) ? lo : 0.0;
  }
  return floor;
}

NnMlpModel::NnMlpModel(FeatureSchema schema, NnMlpConfig config, Eigen::VectorXd column_floor, double base_rate,
                       std::uint64_t seed)
    : schema_(std::move(schema)), config_(config), floor_(std::move(column_floor)) {
  config_.validate();
  if (floor_.size() != static_cast<Index>(schema_.n_continuous()))
    throw ContractError("nnMLP column floor does not match continuous feature count");
  Rng rng = make_stream(seed, "init");
  const Index d = one_hot_width(schema_);
  auto weights = [&](const std::string& name, Index in, Index out) {
    return params_.add(name, Shape{in, out}, uniform_matrix(in, out, 0.0, 1.0 / std::sqrt(static_cast<double>(in)), rng));
  };
  auto bias = [&](const std::string& name, Index out) {
    return params_.add(name, Shape{out}, uniform_matrix(1, out, -0.1, 0.0, rng));
  };
  layers_.w1 = weights("fc1.w", d, config_.hidden1);
  layers_.b1 = bias("fc1.b", config_.hidden1);
  layers_.w2 = weights("fc2.w", config_.hidden1, config_.hidden2);
  layers_.b2 = bias("fc2.b", config_.hidden2);
  layers_.w3 = weights("out.w", config_.hidden2, 1);
  const double rate = std::clamp(base_rate, 1e-6, 1.0 - 1e-6);
  layers_.b3 = params_.add("out.b", Shape{1}, RowMatrixd::Constant(1, 1, std::log(rate / (1.0 - rate))));
  project_constraints(layers_);
}

RowMatrixd NnMlpModel::design(const Batch& batch) const {
  RowMatrixd x = one_hot_encode(batch, schema_);
  for (Index r = 0; r < batch.size(); ++r) {
    for (Index i = 0; i < floor_.size(); ++i) {
      // Values below the training minimum map to the lowest exposure.
      x(r, i) = batch.continuous_missing(r, i) ? 0.0 : std::max(0.0, batch.continuous(r, i) - floor_(i));
    }
  }
  return x;
}

Tensor NnMlpModel::forward(Tape& tape, const Batch& batch, const ForwardOptions&) const {
  if (batch.continuous.cols() != static_cast<Index>(schema_.n_continuous()) ||
      batch.categorical.cols() != static_cast<Index>(schema_.n_categorical()) ||
      batch.checkbox.size() != schema_.n_checkbox())
    throw ContractError("batch does not conform to the model's schema");
  return nnmlp_forward(tape, Tensor::constant(design(batch)), layers_);
}

}  // namespace trace
