#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "trace/metrics.hpp"
#include "trace/model.hpp"
#include "trace/optim.hpp"

namespace trace {

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 2e-4;
  Index batch_size = 32;
  double focal_alpha = 0.8;
  double focal_gamma = 2.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;       // rmsprop only
  double weight_decay = 0.0;
  PlateauScheduler::Options scheduler{};
  double threshold = 0.5;
  std::uint64_t seed = 0;

  /// Adam without decay for TRACE; RMSProp (momentum 0.9, decay 1e-3) for nnMLP.
  static TrainConfig defaults_for(ModelKind kind);

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double loss = 0.0;
  EvalReport validation;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Position in `epochs` of the highest validation F1 (earliest on ties).
  std::size_t best = 0;

  const EpochRecord& best_epoch() const { return epochs.at(best); }
};

struct TrainResult {
  TrainHistory history;
  std::vector<RowMatrixd> best_parameters;
};

/// Called after every optimizer step (and constraint projection).
using StepObserver = std::function<void(int epoch, std::size_t batch, const RiskModel& model)>;

/// Focal-loss training with stratified batches, validation every epoch,
/// best-F1 checkpoint selection and plateau scheduling on balanced
/// accuracy. On return the model holds the best parameters.
TrainResult train(RiskModel& model, const TabularDataset& train_set, const TabularDataset& val_set,
                  const TrainConfig& config, const StepObserver& observer = {});

std::string history_csv(const TrainHistory& history);
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace trace
