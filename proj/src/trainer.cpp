#include "trace/trainer.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "trace/focal_loss.hpp"

namespace trace {

TrainConfig TrainConfig::defaults_for(ModelKind kind) {
  TrainConfig c;
  if (kind == ModelKind::nnmlp) {
    c.optimizer = OptimizerKind::rmsprop;
    c.momentum = 0.9;
    c.weight_decay = 1e-3;
  }
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2");
  if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ConfigError("focal alpha must lie in (0, 1)");
  if (!(focal_gamma >= 0.0)) throw ConfigError("focal gamma must be >= 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  if (weight_decay < 0.0 || momentum < 0.0) throw ConfigError("weight decay and momentum must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"focal_alpha", focal_alpha},
          {"focal_gamma", focal_gamma},
          {"optimizer", to_string(optimizer)},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"scheduler",
           {{"kind", "plateau"},
            {"metric", "balanced_accuracy"},
            {"patience", scheduler.patience},
            {"factor", scheduler.factor},
            {"min_delta", scheduler.min_delta}}},
          {"threshold", threshold},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<Index>();
    c.focal_alpha = j.at("focal_alpha").get<double>();
    c.focal_gamma = j.at("focal_gamma").get<double>();
    c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    c.momentum = j.at("momentum").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    const auto& s = j.at("scheduler");
    c.scheduler.patience = s.at("patience").get<int>();
    c.scheduler.factor = s.at("factor").get<double>();
    c.scheduler.min_delta = s.at("min_delta").get<double>();
    c.threshold = j.at("threshold").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainResult train(RiskModel& model, const TabularDataset& train_set, const TabularDataset& val_set,
                  const TrainConfig& config, const StepObserver& observer) {
  config.validate();
  if (train_set.positives() < 1 || train_set.negatives() < 1)
    throw DatasetError("training set needs at least one positive and one negative sample");
  if (val_set.size() == 0) throw DatasetError("validation set is empty");

  Rng batch_rng = make_stream(config.seed, "batches");
  Rng dropout_rng = make_stream(config.seed, "dropout");
  Adam adam(Adam::Options{.weight_decay = config.weight_decay});
  RmsProp rmsprop(RmsProp::Options{.momentum = config.momentum, .weight_decay = config.weight_decay});
  PlateauScheduler scheduler(config.learning_rate, config.scheduler);

  TrainResult result;
  auto& params = model.parameters();
  double best_f1 = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = scheduler.lr();
    const auto batches = stratified_batches(train_set, config.batch_size, batch_rng);
    double loss_sum = 0.0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch batch = train_set.subset(batches[bi]);
      params.zero_grad();
      Tape tape;
      ForwardOptions options;
      options.dropout_rng = &dropout_rng;
      auto logits = model.forward(tape, batch, options);
      auto loss = focal_loss(tape, logits, batch.labels, config.focal_alpha, config.focal_gamma);
      if (!std::isfinite(loss.item())) {
        auto culprit = params.first_non_finite();
        if (culprit.empty()) culprit = logits.value().allFinite() ? "loss" : "logits";
        throw TrainingError(fmt::format("non-finite loss at epoch {}, batch {} (offending tensor: {})", epoch, bi + 1, culprit));
      }
      tape.backward(loss);
      if (auto culprit = params.first_non_finite(); !culprit.empty()) {
        throw TrainingError(fmt::format("non-finite gradient at epoch {}, batch {} (offending tensor: {})", epoch, bi + 1, culprit));
      }
      if (config.optimizer == OptimizerKind::adam) {
        adam.step(params, lr);
      } else {
        rmsprop.step(params, lr);
      }
      model.after_step();
      loss_sum += loss.item() * static_cast<double>(batch.size());
      if (observer) observer(epoch, bi, model);
    }
    params.zero_grad();

    EpochRecord record;
    record.epoch = epoch;
    record.loss = loss_sum / static_cast<double>(train_set.size());
    record.validation = evaluate(model, val_set, config.threshold);
    record.lr = lr;
    result.history.epochs.push_back(record);
    if (record.validation.f1 > best_f1) {
      best_f1 = record.validation.f1;
      result.history.best = result.history.epochs.size() - 1;
      result.best_parameters = params.snapshot();
    }
    scheduler.step(record.validation.balanced_accuracy);
  }
  params.restore(result.best_parameters);
  return result;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,loss,acc,f1,sens,spec,ba,lr\n";
  for (const auto& e : history.epochs) {
    const auto& v = e.validation;
    out += fmt::format("{},{:.10f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6e}\n", e.epoch, e.loss, v.accuracy, v.f1,
                       v.sensitivity, v.specificity, v.balanced_accuracy, e.lr);
  }
  return out;
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_csv(history);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace trace
