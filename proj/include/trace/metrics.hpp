#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "trace/dataset.hpp"
#include "trace/model.hpp"

namespace trace {

struct EvalReport {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double balanced_accuracy = 0.0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Metrics from confusion counts; empty denominators give 0.
EvalReport report_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn);

/// Predicts positive iff probability >= threshold.
EvalReport score_probabilities(const Eigen::VectorXd& probabilities, const Eigen::VectorXi& labels, double threshold = 0.5);

/// Sigmoid of the model's logits, thresholded.
EvalReport evaluate(const RiskModel& model, const TabularDataset& data, double threshold = 0.5);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);

}  // namespace trace
