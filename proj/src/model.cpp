#include "trace/model.hpp"

#include <numeric>

namespace trace {

std::string to_string(ModelKind kind) { return kind == ModelKind::trace ? "trace" : "nnmlp"; }

ModelKind parse_model_kind(const std::string& name) {
  if (name == "trace") return ModelKind::trace;
  if (name == "nnmlp") return ModelKind::nnmlp;
  throw ConfigError("unknown model '" + name + "' (expected trace or nnmlp)");
}

Eigen::VectorXd RiskModel::predict_logits(const TabularDataset& data, Index chunk) const {
  Eigen::VectorXd out(data.size());
  std::vector<Index> rows;
  for (Index start = 0; start < data.size(); start += chunk) {
    const Index n = std::min(chunk, data.size() - start);
    rows.resize(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), start);
    Tape tape(Tape::Mode::inference);
    const auto logits = forward(tape, data.subset(rows));
    out.segment(start, n) = logits.value().col(0);
  }
  return out;
}

}  // namespace trace
