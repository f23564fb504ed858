#pragma once

#include <limits>
#include <string>
#include <vector>

#include "trace/params.hpp"

namespace trace {

enum class OptimizerKind { adam, rmsprop };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

/// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8) with optional
/// coupled weight decay.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  Adam() = default;
  explicit Adam(Options options) : options_(options) {}

  void step(ParameterSet& params, double lr);
  long steps() const { return t_; }

 private:
  Options options_;
  long t_ = 0;
  std::vector<RowMatrixd> m_, v_;
};

/// RMSProp with squared-gradient decay 0.99, heavy-ball momentum and
/// coupled weight decay (decay term added to the gradient).
class RmsProp {
 public:
  struct Options {
    double alpha = 0.99;
    double eps = 1e-8;
    double momentum = 0.9;
    double weight_decay = 1e-3;
  };

  RmsProp() = default;
  explicit RmsProp(Options options) : options_(options) {}

  void step(ParameterSet& params, double lr);

 private:
  Options options_;
  std::vector<RowMatrixd> square_avg_, momentum_buf_;
};

/// Multiplies the learning rate by `factor` once the monitored metric has
/// failed to beat its best value by more than `min_delta` for more than
/// `patience` consecutive epochs; the bad-epoch counter then resets.
class PlateauScheduler {
 public:
  struct Options {
    int patience = 10;
    double factor = 0.1;
    double min_delta = 1e-4;
  };

  explicit PlateauScheduler(double initial_lr, Options options);
  PlateauScheduler(double initial_lr) : PlateauScheduler(initial_lr, Options{}) {}

  /// Feeds one epoch's metric (higher is better) and returns the new rate.
  double step(double metric);
  double lr() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  Options options_;
  double lr_;
  double best_ = -std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

}  // namespace trace
