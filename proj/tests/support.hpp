#pragma once

#include <random>

#include "trace/dataset.hpp"
#include "trace/schema.hpp"
#include "trace/tensor.hpp"

namespace testing {

using trace::Index;
using trace::RowMatrixd;

inline RowMatrixd random_matrix(Index rows, Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  RowMatrixd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Values bounded away from zero, so kinks and tiny denominators stay out of
// finite-difference windows.
inline RowMatrixd away_from_zero(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  RowMatrixd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = sign(rng) ? u(rng) : -u(rng);
  return m;
}

// One feature of each kind.
inline trace::FeatureSchema toy_schema() {
  return trace::parse_schema(R"(
label: y
features:
  - {name: age, kind: continuous}
  - {name: ancestry, kind: checkbox, members: [a1, a2, a3]}
  - {name: skin, kind: categorical, categories: [I, II, III, IV]}
)");
}

// Random dataset over `schema` with roughly `missing` of all cells absent.
inline trace::TabularDataset random_dataset(const trace::FeatureSchema& schema, Index n, std::mt19937_64& rng,
                                            double missing = 0.0) {
  auto d = trace::TabularDataset::allocate(schema, n);
  std::normal_distribution<double> z;
  std::bernoulli_distribution gone(missing), bit(0.4), label(0.3);
  for (Index i = 0; i < n; ++i) {
    for (Index c = 0; c < d.continuous.cols(); ++c) {
      d.continuous_missing(i, c) = gone(rng);
      d.continuous(i, c) = d.continuous_missing(i, c) ? 0.0 : z(rng);
    }
    for (Index c = 0; c < d.categorical.cols(); ++c) {
      const int card = schema.features()[schema.categorical()[static_cast<std::size_t>(c)]].cardinality;
      d.categorical(i, c) = gone(rng) ? 0 : std::uniform_int_distribution<int>(1, card)(rng);
    }
    for (std::size_t f = 0; f < d.checkbox.size(); ++f) {
      const bool absent = gone(rng);
      d.checkbox_missing(i, static_cast<Index>(f)) = absent;
      for (Index m = 0; m < d.checkbox[f].cols(); ++m) d.checkbox[f](i, m) = (!absent && bit(rng)) ? 1.0 : 0.0;
    }
    d.labels(i) = label(rng) ? 1 : 0;
  }
  d.labels(0) = 1;
  d.labels(1) = 0;
  return d;
}

}  // namespace testing
