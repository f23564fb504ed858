#include "trace/metrics.hpp"

#include <fmt/format.h>

namespace trace {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace

EvalReport report_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
  EvalReport r;
  r.tp = tp;
  r.fp = fp;
  r.tn = tn;
  r.fn = fn;
  const auto d = [](std::int64_t v) { return static_cast<double>(v); };
  r.accuracy = ratio(d(tp + tn), d(r.total()));
  r.sensitivity = ratio(d(tp), d(tp + fn));
  r.specificity = ratio(d(tn), d(tn + fp));
  r.precision = ratio(d(tp), d(tp + fp));
  r.f1 = ratio(2.0 * r.precision * r.sensitivity, r.precision + r.sensitivity);
  r.balanced_accuracy = (r.sensitivity + r.specificity) / 2.0;
  return r;
}

EvalReport score_probabilities(const Eigen::VectorXd& probabilities, const Eigen::VectorXi& labels, double threshold) {
  if (probabilities.size() != labels.size()) throw ContractError("probabilities and labels differ in length");
  if (labels.size() == 0) throw EvaluationError("cannot evaluate an empty dataset");
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (Index i = 0; i < labels.size(); ++i) {
    const bool predicted = probabilities(i) >= threshold;
    if (labels(i)) {
      predicted ? ++tp : ++fn;
    } else {
      predicted ? ++fp : ++tn;
    }
  }
  return report_from_counts(tp, fp, tn, fn);
}

EvalReport evaluate(const RiskModel& model, const TabularDataset& data, double threshold) {
  if (data.size() == 0) throw EvaluationError("cannot evaluate an empty dataset");
  const Eigen::VectorXd logits = model.predict_logits(data);
  const Eigen::VectorXd p = logits.unaryExpr([](double v) { return stable_sigmoid(v); });
  return score_probabilities(p, data.labels, threshold);
}

std::string report_csv_header() {
  return "tp,fp,tn,fn,accuracy,precision,f1,sensitivity,specificity,balanced_accuracy";
}

std::string report_csv_row(const EvalReport& r) {
  return fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}", r.tp, r.fp, r.tn, r.fn, r.accuracy,
                     r.precision, r.f1, r.sensitivity, r.specificity, r.balanced_accuracy);
}

}  // namespace trace
