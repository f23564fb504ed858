#pragma once

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

#include "trace/checkpoint.hpp"
#include "trace/dataset.hpp"
#include "trace/metrics.hpp"
#include "trace/nnmlp.hpp"
#include "trace/trace_model.hpp"
#include "trace/trainer.hpp"

namespace trace {

inline constexpr const char* kToolVersion = "0.1.0";

enum class MissingPolicy { keep, drop };

/// Everything that determines a training run besides the data.
struct RunSpec {
  ModelKind model = ModelKind::trace;
  TrainConfig train;
  TraceConfig trace;
  NnMlpConfig nnmlp{64, 64};
  double val_fraction = 0.2;
  double test_fraction = 0.0;
  MissingPolicy missing = MissingPolicy::keep;
  /// Standardize continuous columns with training statistics.
  bool standardize = true;

  static RunSpec defaults(ModelKind model);
  void validate() const;
  nlohmann::json model_config() const;
  nlohmann::json to_json() const;
  static RunSpec from_json(const nlohmann::json& j);
};

struct Splits {
  TabularDataset train, val, test;
};

/// Stratified train/val(/test) split of raw data driven by the run seed.
Splits split_dataset(const TabularDataset& raw, const RunSpec& spec);

struct FitResult {
  ModelBundle bundle;
  TrainResult training;
  /// Best model on the validation split.
  EvalReport report;
  Index train_samples = 0;
};

/// Standardizes with training statistics, builds the model and trains it.
/// Inputs are raw (unstandardized); the drop policy applies to `train_raw`.
FitResult fit(const FeatureSchema& schema, const TabularDataset& train_raw, const TabularDataset& val_raw,
              const RunSpec& spec);

struct CurvePoint {
  double ratio = 0.0;
  int repeat = 0;
  EvalReport report;
};

/// For every ratio and repeat r (seed + r): split, mask `ratio` of the
/// training cells, train, score the untouched validation split.
std::vector<CurvePoint> missing_curve(const FeatureSchema& schema, const TabularDataset& raw, const RunSpec& spec,
                                      const std::vector<double>& ratios, int repeats);
std::string curve_csv(const std::vector<CurvePoint>& points);

struct AblationRow {
  std::string arm;  // "drop" or "keep"
  double alpha = 0.0;
  Index train_samples = 0;
  Index total_train_samples = 0;
  Index val_samples = 0;
  std::string val_hash;
  EvalReport report;
};

/// Trains on drop_incomplete(train) and on the full training split, both
/// scored on the complete-only validation split, for each alpha. Without
/// incomplete training samples only the "keep" arm runs and a warning goes
/// to `warnings`.
std::vector<AblationRow> ablate_missing(const FeatureSchema& schema, const TabularDataset& raw, const RunSpec& spec,
                                        const std::vector<double>& alphas, std::ostream* warnings = nullptr);
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// SHA-256 of the CSV serialization of `data`.
std::string dataset_hash(const TabularDataset& data, const FeatureSchema& schema);

/// Command-line entry point. Returns 0 on success, 1 on validation or
/// contract failures, 2 on I/O failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trace
