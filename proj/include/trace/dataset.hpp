#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "trace/random.hpp"
#include "trace/schema.hpp"
#include "trace/tensor.hpp"

namespace trace {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Column-typed samples with explicit per-cell missingness.
///
/// Continuous cells that are missing hold 0.0; categorical cells hold an
/// index in [1, cardinality] or 0 when missing; checkbox members hold 0/1
/// and a feature-level flag marks a checkbox answer as absent (all bits 0).
struct TabularDataset {
  RowMatrixd continuous;            // (n, N_num)
  BoolMatrix continuous_missing;    // (n, N_num)
  IndexMatrix categorical;          // (n, N_cat)
  std::vector<RowMatrixd> checkbox; // per checkbox feature: (n, C_i)
  BoolMatrix checkbox_missing;      // (n, N_check)
  Eigen::VectorXi labels;           // (n)
  std::vector<std::int64_t> ids;    // source row of each sample

  static TabularDataset allocate(const FeatureSchema& schema, Index n);

  Index size() const { return labels.size(); }
  Index positives() const { return labels.sum(); }
  Index negatives() const { return size() - positives(); }
  double positive_ratio() const { return size() ? static_cast<double>(positives()) / static_cast<double>(size()) : 0.0; }

  bool complete(Index row) const;
  /// Number of missing feature cells (a checkbox feature is one cell).
  Index missing_cells() const;

  TabularDataset subset(std::span<const Index> rows) const;

  /// Throws DatasetError unless the shapes match `schema` and every
  /// representation invariant holds.
  void validate(const FeatureSchema& schema) const;

  friend bool operator==(const TabularDataset& a, const TabularDataset& b);
};

/// A batch is a row subset of a dataset, carried in the same layout.
using Batch = TabularDataset;

// --- CSV -------------------------------------------------------------------

TabularDataset read_csv(std::istream& in, const FeatureSchema& schema);
TabularDataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
void write_csv(std::ostream& out, const TabularDataset& data, const FeatureSchema& schema);
void save_csv(const std::filesystem::path& path, const TabularDataset& data, const FeatureSchema& schema);

// --- Preprocessing ----------------------------------------------------------

/// Per-column statistics of the non-missing continuous training cells.
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

/// Population mean/std over observed cells; empty or constant columns get
/// std 1 (and mean 0 when no cell is observed).
Standardization fit_standardization(const TabularDataset& train);
TabularDataset apply_standardization(const TabularDataset& data, const Standardization& stats);

/// Design matrix for the non-negative MLP:
/// [continuous, missing -> 0] ++ [one-hot per categorical, missing -> 0s] ++ [checkbox bits].
RowMatrixd one_hot_encode(const TabularDataset& data, const FeatureSchema& schema);
Index one_hot_width(const FeatureSchema& schema);

// --- Splitting and batching ---------------------------------------------------

/// Stratified holdout: round(fraction * class count) of each class goes to
/// the second split. Deterministic in `seed`.
std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& data, double val_fraction,
                                                           std::uint64_t seed);

/// Positives per stratified batch: round(batch_size * ratio), clamped to
/// [1, batch_size - 1] when both classes are present.
Index positives_per_batch(Index batch_size, Index positives, Index total);

/// Row indices of one epoch's batches. Each full batch carries the
/// dataset's class ratio; leftovers form trailing partial batches. Every
/// row appears exactly once.
std::vector<std::vector<Index>> stratified_batches(const TabularDataset& data, Index batch_size, Rng& rng);

// --- Missingness ----------------------------------------------------------------

/// Masks exactly round(ratio * n * n_features) feature cells chosen uniformly
/// without replacement.
TabularDataset simulate_missing(const TabularDataset& data, const FeatureSchema& schema, double ratio,
                                std::uint64_t seed);

/// Keeps only samples without any missing cell; throws DatasetError if none remain.
TabularDataset drop_incomplete(const TabularDataset& data);

// --- Synthetic data ---------------------------------------------------------------

/// Seven-feature schema (3 continuous, 3 categorical, 1 checkbox) used for
/// desk-scale runs.
FeatureSchema synthetic_schema();

struct SyntheticSpec {
  FeatureSchema schema = synthetic_schema();
  Index samples = 2000;
  double positive_ratio = 0.1;
  std::uint64_t seed = 7;
  /// Noise standard deviation relative to the clean score's spread.
  double noise = 0.25;
};

/// Ground-truth monotone score: all coefficients are non-negative, so the
/// positive class is a monotone function of the one-hot exposures.
struct SyntheticTruth {
  std::vector<bool> informative;               // per schema feature
  Eigen::VectorXd continuous_weight;           // per continuous feature
  std::vector<Eigen::VectorXd> category_value; // per categorical, indexed by category (0 unused)
  std::vector<Eigen::VectorXd> member_weight;  // per checkbox feature, per member
};

struct SyntheticData {
  TabularDataset data;
  SyntheticTruth truth;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace trace
