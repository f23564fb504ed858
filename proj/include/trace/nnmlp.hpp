#pragma once

#include <nlohmann/json.hpp>

#include "trace/dataset.hpp"
#include "trace/model.hpp"

namespace trace {

struct NnMlpConfig {
  Index hidden1 = 64;
  Index hidden2 = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static NnMlpConfig from_json(const nlohmann::json& j);
};

/// Sign-constrained parameters: weights >= 0, hidden biases <= 0, output
/// bias free.
struct NnMlpParams {
  Tensor w1, b1;  // (d, h1), (h1)
  Tensor w2, b2;  // (h1, h2), (h2)
  Tensor w3, b3;  // (h2, 1), (1)
};

/// Y = ReLU(ReLU(x W1 + b1) W2 + b2) W3 + b3 for non-negative inputs x (B, d).
Tensor nnmlp_forward(Tape& tape, const Tensor& x, const NnMlpParams& params);

/// Clamps weights to >= 0 and hidden biases to <= 0. Idempotent.
void project_constraints(NnMlpParams& params);

bool satisfies_constraints(const NnMlpParams& params);

/// sigmoid(b3): the predicted risk when no exposure is active.
double baseline_risk(const NnMlpParams& params);

/// Non-negative MLP over the one-hot design matrix. Continuous columns are
/// shifted by the per-column training minimum so inputs stay >= 0.
class NnMlpModel final : public RiskModel {
 public:
  /// `column_floor` holds the standardized training minimum of every
  /// continuous column; `base_rate` initializes the output bias.
  NnMlpModel(FeatureSchema schema, NnMlpConfig config, Eigen::VectorXd column_floor, double base_rate,
             std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::nnmlp; }
  Tensor forward(Tape& tape, const Batch& batch, const ForwardOptions& options = {}) const override;
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  void after_step() override { project_constraints(layers_); }
  nlohmann::json config_json() const override { return config_.to_json(); }

  /// Non-negative inputs for a standardized batch.
  RowMatrixd design(const Batch& batch) const;

  const NnMlpParams& layers() const { return layers_; }
  NnMlpParams& layers() { return layers_; }
  const Eigen::VectorXd& column_floor() const { return floor_; }
  const FeatureSchema& schema() const { return schema_; }

 private:
  FeatureSchema schema_;
  NnMlpConfig config_;
  Eigen::VectorXd floor_;
  ParameterSet params_;
  NnMlpParams layers_;
};

/// Per-column minimum of observed continuous cells (0 for empty columns).
Eigen::VectorXd continuous_floor(const TabularDataset& standardized_train);

}  // namespace trace
