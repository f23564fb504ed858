#include "trace/params.hpp"

#include <random>

namespace trace {

Tensor ParameterSet::add(std::string name, Shape shape, RowMatrixd value) {
  for (const auto& e : entries_) {
    if (e.name == name) throw ContractError("duplicate parameter name '" + name + "'");
  }
  Tensor t = Tensor::parameter(std::move(shape), std::move(value));
  entries_.push_back({std::move(name), t});
  return t;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named '" + name + "'");
}

Index ParameterSet::count(const std::string& prefix) const {
  Index n = 0;
  for (const auto& e : entries_) {
    if (e.name.compare(0, prefix.size(), prefix) == 0) n += e.tensor.size();
  }
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

std::vector<RowMatrixd> ParameterSet::snapshot() const {
  std::vector<RowMatrixd> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.tensor.value());
  return out;
}

void ParameterSet::restore(const std::vector<RowMatrixd>& values) {
  if (values.size() != entries_.size()) throw ContractError("parameter snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto& dst = entries_[i].tensor.mutable_value();
    if (dst.rows() != values[i].rows() || dst.cols() != values[i].cols())
      throw ContractError("parameter snapshot shape mismatch for '" + entries_[i].name + "'");
    dst = values[i];
  }
}

std::string ParameterSet::first_non_finite() const {
  for (const auto& e : entries_) {
    if (!e.tensor.all_finite()) return e.name;
  }
  return {};
}

RowMatrixd uniform_matrix(Index rows, Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  RowMatrixd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

RowMatrixd normal_matrix(Index rows, Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  RowMatrixd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace trace
