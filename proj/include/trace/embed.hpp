#pragma once

#include <vector>

#include "trace/dataset.hpp"
#include "trace/params.hpp"
#include "trace/tensor.hpp"

namespace trace {

/// Two-layer MLP per continuous feature: 1 -> E, SELU, E -> E. With a
/// shared embedder every vector holds a single entry used for all features.
struct ContinuousEmbedderParams {
  std::vector<Tensor> w1;  // (1, E)
  std::vector<Tensor> b1;  // (E)
  std::vector<Tensor> w2;  // (E, E)
  std::vector<Tensor> b2;  // (E)
  bool shared = false;
};

/// One (cardinality + 1, E) table per categorical feature; row 0 is the
/// missing token.
struct CategoricalEmbedderParams {
  std::vector<Tensor> tables;
};

/// One (C + 1, E) table per checkbox feature; rows 0..C-1 embed the members
/// and row C is the feature-level missing token.
struct CheckboxEmbedderParams {
  std::vector<Tensor> tables;
};

/// (B, N_num, E). Tokens of missing cells are exactly zero and pass no gradient.
Tensor embed_continuous(Tape& tape, const RowMatrixd& values, const BoolMatrix& missing,
                        const ContinuousEmbedderParams& params);

/// (B, N_cat, E) by table lookup; index 0 selects the missing row.
Tensor embed_categorical(Tape& tape, const IndexMatrix& indices, const CategoricalEmbedderParams& params);

/// (B, N_check, E): sum of the active members' rows, or the missing row when
/// the whole feature is absent.
Tensor embed_checkbox(Tape& tape, const std::vector<RowMatrixd>& bits, const BoolMatrix& missing,
                      const CheckboxEmbedderParams& params);

/// Token axis order: continuous, checkbox, categorical. Undefined pieces
/// (empty groups) are skipped.
Tensor concat_feature_tokens(Tape& tape, const Tensor& continuous, const Tensor& checkbox, const Tensor& categorical);

}  // namespace trace
