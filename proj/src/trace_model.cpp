#include "trace/trace_model.hpp"

#include <cmath>

namespace trace {

void TraceConfig::validate() const {
  if (model_size < 1) throw ConfigError("model size must be positive");
  if (heads < 1) throw ConfigError("attention heads must be positive");
  if (model_size % heads != 0) throw ConfigError("model size must be divisible by the number of heads");
  if (mlp_ratio < 1) throw ConfigError("transformer MLP ratio must be >= 1");
  if (encoder_layers < 1) throw ConfigError("at least one encoder layer is required");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

nlohmann::json TraceConfig::to_json() const {
  return {{"model_size", model_size},
          {"encoder_layers", encoder_layers},
          {"heads", heads},
          {"mlp_ratio", mlp_ratio},
          {"final_representation", "GAP"},
          {"dropout", dropout},
          {"shared_continuous_mlp", shared_continuous_mlp},
          {"checkbox_embeddings", checkbox_embeddings}};
}

TraceConfig TraceConfig::from_json(const nlohmann::json& j) {
  TraceConfig c;
  c.model_size = j.at("model_size").get<Index>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.shared_continuous_mlp = j.at("shared_continuous_mlp").get<bool>();
  c.checkbox_embeddings = j.at("checkbox_embeddings").get<bool>();
  c.validate();
  return c;
}

Index encoder_layer_param_count(Index e, int mlp_ratio) {
  const Index hidden = e * mlp_ratio;
  return 4 * (e * e + e) + (e * hidden + hidden + hidden * e + e) + 2 * (e + e);
}

namespace {

RowMatrixd fan_in_uniform(Index fan_in, Index rows, Index cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_matrix(rows, cols, -bound, bound, rng);
}

}  // namespace

TraceModel::TraceModel(FeatureSchema schema, TraceConfig config, std::uint64_t seed)
    : schema_(std::move(schema)), config_(config) {
  config_.validate();
  Rng rng = make_stream(seed, "init");
  const Index e = config_.model_size;
  auto linear = [&](const std::string& name, Index in, Index out, Tensor& w, Tensor& b) {
    w = params_.add(name + ".w", Shape{in, out}, fan_in_uniform(in, in, out, rng));
    b = params_.add(name + ".b", Shape{out}, fan_in_uniform(in, 1, out, rng));
  };
  auto table = [&](const std::string& name, Index rows) {
    return params_.add(name, Shape{rows, e}, normal_matrix(rows, e, 0.02, rng));
  };

  continuous_.shared = config_.shared_continuous_mlp;
  const std::size_t n_cont = schema_.n_continuous() == 0 ? 0 : (config_.shared_continuous_mlp ? 1 : schema_.n_continuous());
  for (std::size_t i = 0; i < n_cont; ++i) {
    const std::string base = config_.shared_continuous_mlp ? "cont.shared" : "cont." + schema_.feature(schema_.continuous()[i]).name;
    Tensor w1, b1, w2, b2;
    linear(base + ".fc1", 1, e, w1, b1);
    linear(base + ".fc2", e, e, w2, b2);
    continuous_.w1.push_back(w1);
    continuous_.b1.push_back(b1);
    continuous_.w2.push_back(w2);
    continuous_.b2.push_back(b2);
  }
  for (auto f : schema_.checkbox()) {
    const auto& spec = schema_.feature(f);
    if (config_.checkbox_embeddings) {
      checkbox_.tables.push_back(table("box." + spec.name, spec.cardinality + 1));
    } else {
      for (const auto& m : spec.members) members_.tables.push_back(table("member." + m, 3));
    }
  }
  for (auto f : schema_.categorical()) {
    const auto& spec = schema_.feature(f);
    categorical_.tables.push_back(table("cat." + spec.name, spec.cardinality + 1));
  }
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string base = "enc." + std::to_string(l);
    EncoderLayerParams p;
    linear(base + ".q", e, e, p.wq, p.bq);
    linear(base + ".k", e, e, p.wk, p.bk);
    linear(base + ".v", e, e, p.wv, p.bv);
    linear(base + ".out", e, e, p.wo, p.bo);
    p.ln1_gain = params_.add(base + ".ln1.gain", Shape{e}, RowMatrixd::Ones(1, e));
    p.ln1_bias = params_.add(base + ".ln1.bias", Shape{e}, RowMatrixd::Zero(1, e));
    const Index hidden = e * config_.mlp_ratio;
    linear(base + ".ff1", e, hidden, p.ff1_w, p.ff1_b);
    linear(base + ".ff2", hidden, e, p.ff2_w, p.ff2_b);
    p.ln2_gain = params_.add(base + ".ln2.gain", Shape{e}, RowMatrixd::Ones(1, e));
    p.ln2_bias = params_.add(base + ".ln2.bias", Shape{e}, RowMatrixd::Zero(1, e));
    layers_.push_back(std::move(p));
  }
  linear("head", e, 1, head_w_, head_b_);
}

Tensor multi_head_attention(Tape& tape, const Tensor& tokens, const EncoderLayerParams& p, int heads,
                            BasicAttentionWeights<double>* capture) {
  auto q = add_bias(tape, matmul(tape, tokens, p.wq), p.bq);
  auto k = add_bias(tape, matmul(tape, tokens, p.wk), p.bk);
  auto v = add_bias(tape, matmul(tape, tokens, p.wv), p.bv);
  auto context = attention(tape, q, k, v, heads, capture);
  return add_bias(tape, matmul(tape, context, p.wo), p.bo);
}

Tensor encoder_layer(Tape& tape, const Tensor& tokens, const EncoderLayerParams& p, int heads,
                     BasicAttentionWeights<double>* capture, double dropout_rate, Rng* rng) {
  auto attended = multi_head_attention(tape, tokens, p, heads, capture);
  if (rng) attended = dropout(tape, attended, dropout_rate, *rng);
  auto x = layer_norm(tape, add(tape, tokens, attended), p.ln1_gain, p.ln1_bias);
  auto hidden = activation(tape, add_bias(tape, matmul(tape, x, p.ff1_w), p.ff1_b), Activation::relu);
  auto ff = add_bias(tape, matmul(tape, hidden, p.ff2_w), p.ff2_b);
  if (rng) ff = dropout(tape, ff, dropout_rate, *rng);
  return layer_norm(tape, add(tape, x, ff), p.ln2_gain, p.ln2_bias);
}

Tensor TraceModel::embed(Tape& tape, const Batch& batch) const {
  if (batch.continuous.cols() != static_cast<Index>(schema_.n_continuous()) ||
      batch.categorical.cols() != static_cast<Index>(schema_.n_categorical()) ||
      batch.checkbox.size() != schema_.n_checkbox())
    throw ContractError("batch does not conform to the model's schema");
  if (batch.size() == 0) throw ContractError("empty batch");

  auto cont = embed_continuous(tape, batch.continuous, batch.continuous_missing, continuous_);
  Tensor boxes;
  if (config_.checkbox_embeddings) {
    boxes = embed_checkbox(tape, batch.checkbox, batch.checkbox_missing, checkbox_);
  } else if (!batch.checkbox.empty()) {
    IndexMatrix member_idx(batch.size(), static_cast<Index>(members_.tables.size()));
    Index col = 0;
    for (std::size_t k = 0; k < batch.checkbox.size(); ++k) {
      for (Index m = 0; m < batch.checkbox[k].cols(); ++m, ++col) {
        for (Index r = 0; r < batch.size(); ++r) {
          member_idx(r, col) = batch.checkbox_missing(r, static_cast<Index>(k)) ? 0
                                                                                : 1 + static_cast<int>(batch.checkbox[k](r, m));
        }
      }
    }
    boxes = embed_categorical(tape, member_idx, members_);
  }
  auto cats = embed_categorical(tape, batch.categorical, categorical_);
  return concat_feature_tokens(tape, cont, boxes, cats);
}

Tensor TraceModel::forward(Tape& tape, const Batch& batch, const ForwardOptions& options) const {
  auto x = embed(tape, batch);
  if (options.capture) options.capture->layers.assign(layers_.size(), {});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto* cap = options.capture ? &options.capture->layers[l] : nullptr;
    x = encoder_layer(tape, x, layers_[l], config_.heads, cap, config_.dropout,
                      config_.dropout > 0.0 ? options.dropout_rng : nullptr);
  }
  auto pooled = mean_tokens(tape, x);
  return add_bias(tape, matmul(tape, pooled, head_w_), head_b_);
}

std::vector<std::string> TraceModel::token_names() const {
  std::vector<std::string> names;
  for (auto f : schema_.continuous()) names.push_back(schema_.feature(f).name);
  for (auto f : schema_.checkbox()) {
    const auto& spec = schema_.feature(f);
    if (config_.checkbox_embeddings) {
      names.push_back(spec.name);
    } else {
      names.insert(names.end(), spec.members.begin(), spec.members.end());
    }
  }
  for (auto f : schema_.categorical()) names.push_back(schema_.feature(f).name);
  return names;
}

ParamBreakdown TraceModel::count_params() const {
  ParamBreakdown out;
  auto group = [&](const std::string& label, const std::string& prefix) {
    const Index n = params_.count(prefix);
    if (n > 0) out.groups.emplace_back(label, n);
  };
  group("continuous_embedder", "cont.");
  group("checkbox_embedder", "box.");
  group("checkbox_member_embedder", "member.");
  group("categorical_embedder", "cat.");
  for (std::size_t l = 0; l < layers_.size(); ++l) group("encoder_layer_" + std::to_string(l), "enc." + std::to_string(l) + ".");
  group("head", "head.");
  out.total = params_.count();
  return out;
}

}  // namespace trace
