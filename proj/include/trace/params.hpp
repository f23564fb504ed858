#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trace/random.hpp"
#include "trace/tensor.hpp"

namespace trace {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered, named collection of trainable tensors. Order is the
/// serialization and optimizer-state order.
class ParameterSet {
 public:
  Tensor add(std::string name, Shape shape, RowMatrixd value);

  const std::vector<NamedTensor>& entries() const { return entries_; }
  std::vector<NamedTensor>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const Tensor& at(const std::string& name) const;

  /// Number of learnable scalars, optionally restricted to a name prefix.
  Index count(const std::string& prefix = {}) const;

  void zero_grad();

  std::vector<RowMatrixd> snapshot() const;
  void restore(const std::vector<RowMatrixd>& values);

  /// Name of the first tensor holding a non-finite value or gradient, or "".
  std::string first_non_finite() const;

 private:
  std::vector<NamedTensor> entries_;
};

RowMatrixd uniform_matrix(Index rows, Index cols, double lo, double hi, Rng& rng);
RowMatrixd normal_matrix(Index rows, Index cols, double stddev, Rng& rng);

}  // namespace trace
