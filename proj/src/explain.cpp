#include "trace/explain.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <numeric>

namespace trace {

std::string to_string(AttentionView view) { return view == AttentionView::by_sample ? "by-sample" : "by-feature"; }

AttentionView parse_attention_view(const std::string& name) {
  if (name == "by-sample" || name == "by_sample") return AttentionView::by_sample;
  if (name == "by-feature" || name == "by_feature") return AttentionView::by_feature;
  throw ConfigError("unknown attention view '" + name + "' (expected by-sample or by-feature)");
}

std::vector<RowMatrixd> head_averaged(const BasicAttentionWeights<double>& layer) {
  if (layer.heads.empty()) throw ContractError("no attention weights were captured");
  const Index n = layer.tokens;
  const double inv_heads = 1.0 / static_cast<double>(layer.heads.size());
  std::vector<RowMatrixd> out;
  out.reserve(static_cast<std::size_t>(layer.batch));
  for (Index b = 0; b < layer.batch; ++b) {
    RowMatrixd acc = layer.heads.front().middleRows(b * n, n);
    for (std::size_t h = 1; h < layer.heads.size(); ++h) acc += layer.heads[h].middleRows(b * n, n);
    out.push_back(acc * inv_heads);
  }
  return out;
}

RowMatrixd attention_by_sample(const std::vector<RowMatrixd>& per_sample) {
  if (per_sample.empty()) throw ContractError("attention_by_sample: no samples");
  const Index n = per_sample.front().cols();
  RowMatrixd out(static_cast<Index>(per_sample.size()), n);
  for (std::size_t s = 0; s < per_sample.size(); ++s) {
    const auto& m = per_sample[s];
    // Query rows accumulate in order; colwise().sum() may reassociate.
    Eigen::Matrix<double, 1, Eigen::Dynamic> acc = m.row(0);
    for (Index q = 1; q < m.rows(); ++q) acc += m.row(q);
    out.row(static_cast<Index>(s)) = acc / static_cast<double>(m.rows());
  }
  return out;
}

RowMatrixd attention_by_feature(const std::vector<RowMatrixd>& per_sample) {
  if (per_sample.empty()) throw ContractError("attention_by_feature: no samples");
  RowMatrixd acc = per_sample.front();
  for (std::size_t s = 1; s < per_sample.size(); ++s) acc += per_sample[s];
  return acc / static_cast<double>(per_sample.size());
}

std::vector<RowMatrixd> collect_attention(const TraceModel& model, const TabularDataset& samples, int layer,
                                          Index chunk) {
  if (samples.size() == 0) throw EvaluationError("attention export needs at least one sample");
  const int layers = model.config().encoder_layers;
  const int which = layer < 0 ? layers + layer : layer;
  if (which < 0 || which >= layers)
    throw ConfigError(fmt::format("layer {} does not exist (model has {} encoder layers)", layer, layers));
  std::vector<RowMatrixd> out;
  std::vector<Index> rows;
  for (Index start = 0; start < samples.size(); start += chunk) {
    const Index n = std::min(chunk, samples.size() - start);
    rows.resize(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    Tape tape(Tape::Mode::inference);
    AttentionCapture capture;
    ForwardOptions options;
    options.capture = &capture;
    model.forward(tape, samples.subset(rows), options);
    auto part = head_averaged(capture.layers[static_cast<std::size_t>(which)]);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

FeatureAttentionMatrix attention_by_sample(const TraceModel& model, const TabularDataset& samples, int layer) {
  FeatureAttentionMatrix m;
  m.view = AttentionView::by_sample;
  m.column_labels = model.token_names();
  m.values = attention_by_sample(collect_attention(model, samples, layer));
  for (auto id : samples.ids) m.row_labels.push_back(std::to_string(id));
  return m;
}

FeatureAttentionMatrix attention_by_feature(const TraceModel& model, const TabularDataset& samples, int layer) {
  FeatureAttentionMatrix m;
  m.view = AttentionView::by_feature;
  m.column_labels = model.token_names();
  m.row_labels = m.column_labels;
  m.values = attention_by_feature(collect_attention(model, samples, layer));
  return m;
}

std::string matrix_csv(const FeatureAttentionMatrix& matrix) {
  if (static_cast<Index>(matrix.row_labels.size()) != matrix.values.rows() ||
      static_cast<Index>(matrix.column_labels.size()) != matrix.values.cols())
    throw ContractError("attention matrix labels do not match its shape");
  std::string out = "id";
  for (const auto& c : matrix.column_labels) out += "," + c;
  out += '\n';
  for (Index r = 0; r < matrix.values.rows(); ++r) {
    out += matrix.row_labels[static_cast<std::size_t>(r)];
    for (Index c = 0; c < matrix.values.cols(); ++c) out += fmt::format(",{:.6f}", matrix.values(r, c));
    out += '\n';
  }
  return out;
}

void export_matrix_csv(const FeatureAttentionMatrix& matrix, const std::filesystem::path& path) {
  const auto text = matrix_csv(matrix);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write attention matrix to " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Index> sample_rows(Index size, Index count, std::uint64_t seed) {
  std::vector<Index> rows(static_cast<std::size_t>(size));
  std::iota(rows.begin(), rows.end(), Index{0});
  if (count >= size) return rows;
  Rng rng = make_stream(seed, "sample");
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, size - 1);
    std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
  }
  rows.resize(static_cast<std::size_t>(count));
  return rows;
}

}  // namespace trace
