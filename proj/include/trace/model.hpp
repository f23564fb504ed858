#pragma once

#include <nlohmann/json.hpp>

#include <string>

#include "trace/dataset.hpp"
#include "trace/params.hpp"
#include "trace/tensor.hpp"

namespace trace {

enum class ModelKind { trace, nnmlp };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Per-layer attention weights recorded during one forward call.
struct AttentionCapture {
  std::vector<BasicAttentionWeights<double>> layers;
};

struct ForwardOptions {
  AttentionCapture* capture = nullptr;
  /// Source for dropout masks; dropout is skipped when null.
  Rng* dropout_rng = nullptr;
};

/// Common surface of the two risk models: batch in, one logit per sample out.
class RiskModel {
 public:
  virtual ~RiskModel() = default;

  virtual ModelKind kind() const = 0;
  /// Logits of shape (B, 1) for a standardized batch.
  virtual Tensor forward(Tape& tape, const Batch& batch, const ForwardOptions& options = {}) const = 0;
  virtual ParameterSet& parameters() = 0;
  virtual const ParameterSet& parameters() const = 0;
  /// Hook run after every optimizer step (constraint projection).
  virtual void after_step() {}
  virtual nlohmann::json config_json() const = 0;

  /// Inference-mode logits for every row, evaluated in chunks.
  Eigen::VectorXd predict_logits(const TabularDataset& data, Index chunk = 256) const;
};

}  // namespace trace
