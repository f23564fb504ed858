#include "trace/embed.hpp"

namespace trace {

Tensor embed_continuous(Tape& tape, const RowMatrixd& values, const BoolMatrix& missing,
                        const ContinuousEmbedderParams& params) {
  const Index batch = values.rows();
  const Index features = values.cols();
  if (missing.rows() != batch || missing.cols() != features)
    throw ContractError("embed_continuous: mask shape does not match values");
  if (features == 0) return {};
  const std::size_t expected = params.shared ? 1 : static_cast<std::size_t>(features);
  if (params.w1.size() != expected || params.b1.size() != expected || params.w2.size() != expected ||
      params.b2.size() != expected)
    throw ContractError("embed_continuous: parameter count does not match feature count");

  std::vector<Tensor> tokens;
  tokens.reserve(static_cast<std::size_t>(features));
  for (Index i = 0; i < features; ++i) {
    const std::size_t p = params.shared ? 0 : static_cast<std::size_t>(i);
    RowMatrixd column(batch, 1);
    std::vector<bool> keep(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      keep[static_cast<std::size_t>(b)] = !missing(b, i);
      // Masked cells never reach the MLP, so their raw value cannot matter.
      column(b, 0) = missing(b, i) ? 0.0 : values(b, i);
    }
    auto x = Tensor::constant(std::move(column));
    auto h = activation(tape, add_bias(tape, matmul(tape, x, params.w1[p]), params.b1[p]), Activation::selu);
    auto t = add_bias(tape, matmul(tape, h, params.w2[p]), params.b2[p]);
    tokens.push_back(mask_rows(tape, t, keep));
  }
  return concat_tokens(tape, tokens);
}

Tensor embed_categorical(Tape& tape, const IndexMatrix& indices, const CategoricalEmbedderParams& params) {
  if (indices.cols() == 0) return {};
  if (static_cast<std::size_t>(indices.cols()) != params.tables.size())
    throw ContractError("embed_categorical: table count does not match feature count");
  std::vector<Tensor> tokens;
  for (Index j = 0; j < indices.cols(); ++j) {
    std::vector<int> idx(static_cast<std::size_t>(indices.rows()));
    for (Index b = 0; b < indices.rows(); ++b) idx[static_cast<std::size_t>(b)] = indices(b, j);
    tokens.push_back(embedding_lookup(tape, params.tables[static_cast<std::size_t>(j)], idx));
  }
  return concat_tokens(tape, tokens);
}

Tensor embed_checkbox(Tape& tape, const std::vector<RowMatrixd>& bits, const BoolMatrix& missing,
                      const CheckboxEmbedderParams& params) {
  if (bits.empty()) return {};
  if (bits.size() != params.tables.size()) throw ContractError("embed_checkbox: table count does not match feature count");
  if (static_cast<std::size_t>(missing.cols()) != bits.size())
    throw ContractError("embed_checkbox: missing-flag columns do not match feature count");
  std::vector<Tensor> tokens;
  for (std::size_t k = 0; k < bits.size(); ++k) {
    const auto& b = bits[k];
    const Index members = b.cols();
    if (params.tables[k].rows() != members + 1)
      throw ContractError("embed_checkbox: table rows must equal members + 1");
    if (missing.rows() != b.rows()) throw ContractError("embed_checkbox: batch sizes differ");
    if (((b.array() != 0.0) && (b.array() != 1.0)).any()) throw ContractError("embed_checkbox: bits must be 0 or 1");
    // Selector over [members..., missing]: the bit mask itself, or the
    // missing row alone when the feature is absent.
    RowMatrixd selector = RowMatrixd::Zero(b.rows(), members + 1);
    for (Index r = 0; r < b.rows(); ++r) {
      if (missing(r, static_cast<Index>(k))) {
        selector(r, members) = 1.0;
      } else {
        selector.row(r).head(members) = b.row(r);
      }
    }
    tokens.push_back(matmul(tape, Tensor::constant(std::move(selector)), params.tables[k]));
  }
  return concat_tokens(tape, tokens);
}

Tensor concat_feature_tokens(Tape& tape, const Tensor& continuous, const Tensor& checkbox, const Tensor& categorical) {
  std::vector<Tensor> pieces;
  for (const auto* t : {&continuous, &checkbox, &categorical}) {
    if (t->defined()) pieces.push_back(*t);
  }
  if (pieces.empty()) throw ContractError("concat_feature_tokens: no feature tokens");
  return concat_tokens(tape, pieces);
}

}  // namespace trace
