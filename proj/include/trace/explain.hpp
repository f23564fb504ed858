#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "trace/dataset.hpp"
#include "trace/model.hpp"
#include "trace/trace_model.hpp"

namespace trace {

enum class AttentionView { by_sample, by_feature };

std::string to_string(AttentionView view);
AttentionView parse_attention_view(const std::string& name);

/// Attention matrix with axis labels. Columns are always key features in
/// canonical token order; rows are samples (by_sample) or query features
/// (by_feature).
struct FeatureAttentionMatrix {
  AttentionView view = AttentionView::by_sample;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  RowMatrixd values;
};

/// Head-averaged (N, N) attention of every sample in one captured layer.
std::vector<RowMatrixd> head_averaged(const BasicAttentionWeights<double>& layer);

/// One row per sample: head-averaged attention averaged over the query axis.
RowMatrixd attention_by_sample(const std::vector<RowMatrixd>& per_sample);

/// Head-averaged attention averaged over samples: (N, N), queries x keys.
RowMatrixd attention_by_feature(const std::vector<RowMatrixd>& per_sample);

/// Runs `model` over `samples` (standardized) with capture on and collects
/// head-averaged attention of `layer` (negative counts from the end, so -1
/// is the final encoder layer).
std::vector<RowMatrixd> collect_attention(const TraceModel& model, const TabularDataset& samples, int layer = -1,
                                          Index chunk = 128);

FeatureAttentionMatrix attention_by_sample(const TraceModel& model, const TabularDataset& samples, int layer = -1);
FeatureAttentionMatrix attention_by_feature(const TraceModel& model, const TabularDataset& samples, int layer = -1);

/// CSV: header "id,<keys...>", one row per matrix row, 6 decimal places.
void export_matrix_csv(const FeatureAttentionMatrix& matrix, const std::filesystem::path& path);
std::string matrix_csv(const FeatureAttentionMatrix& matrix);

/// Seeded uniform draw of `count` rows without replacement (all rows, in
/// order, when count >= size).
std::vector<Index> sample_rows(Index size, Index count, std::uint64_t seed);

}  // namespace trace
