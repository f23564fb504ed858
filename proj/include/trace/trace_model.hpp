#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "trace/embed.hpp"
#include "trace/model.hpp"
#include "trace/schema.hpp"

namespace trace {

struct TraceConfig {
  Index model_size = 128;
  int encoder_layers = 1;
  int heads = 2;
  int mlp_ratio = 4;
  double dropout = 0.0;
  /// One continuous MLP for all continuous features instead of one each.
  bool shared_continuous_mlp = false;
  /// When false, every checkbox member becomes its own binary categorical
  /// token (the no-checkbox-embedding ablation).
  bool checkbox_embeddings = true;

  void validate() const;
  nlohmann::json to_json() const;
  static TraceConfig from_json(const nlohmann::json& j);
};

struct EncoderLayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_gain, ln1_bias;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor ln2_gain, ln2_bias;
};

/// Self-attention sublayer: Q/K/V projections, per-head scaled dot-product
/// attention, concatenation and output projection.
Tensor multi_head_attention(Tape& tape, const Tensor& tokens, const EncoderLayerParams& p, int heads,
                            BasicAttentionWeights<double>* capture = nullptr);

/// Post-norm encoder block: x -> LN(x + MHA(x)) -> LN(. + FFN(.)).
Tensor encoder_layer(Tape& tape, const Tensor& tokens, const EncoderLayerParams& p, int heads,
                     BasicAttentionWeights<double>* capture = nullptr, double dropout = 0.0, Rng* rng = nullptr);

struct ParamBreakdown {
  std::vector<std::pair<std::string, Index>> groups;
  Index total = 0;
};

class TraceModel final : public RiskModel {
 public:
  TraceModel(FeatureSchema schema, TraceConfig config, std::uint64_t seed);

  ModelKind kind() const override { return ModelKind::trace; }
  Tensor forward(Tape& tape, const Batch& batch, const ForwardOptions& options = {}) const override;
  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }
  nlohmann::json config_json() const override { return config_.to_json(); }

  const TraceConfig& config() const { return config_; }
  const FeatureSchema& schema() const { return schema_; }

  /// Token sequence entering the encoder: (B, N, E).
  Tensor embed(Tape& tape, const Batch& batch) const;

  /// Feature label of every token in canonical order.
  std::vector<std::string> token_names() const;
  Index token_count() const { return static_cast<Index>(token_names().size()); }

  ParamBreakdown count_params() const;

  const ContinuousEmbedderParams& continuous_embedder() const { return continuous_; }
  const CategoricalEmbedderParams& categorical_embedder() const { return categorical_; }
  const CheckboxEmbedderParams& checkbox_embedder() const { return checkbox_; }
  const CategoricalEmbedderParams& member_embedder() const { return members_; }
  const std::vector<EncoderLayerParams>& layers() const { return layers_; }
  const Tensor& head_weight() const { return head_w_; }
  const Tensor& head_bias() const { return head_b_; }

 private:
  FeatureSchema schema_;
  TraceConfig config_;
  ParameterSet params_;
  ContinuousEmbedderParams continuous_;
  CategoricalEmbedderParams categorical_;
  CheckboxEmbedderParams checkbox_;
  CategoricalEmbedderParams members_;  // used when checkbox embeddings are off
  std::vector<EncoderLayerParams> layers_;
  Tensor head_w_, head_b_;
};

/// Scalars in one encoder layer: 4(E^2+E) + (rE^2 + rE + rE^2 + E) + 4E.
Index encoder_layer_param_count(Index model_size, int mlp_ratio);

}  // namespace trace
