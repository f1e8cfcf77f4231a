#include "maldistill/eval/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace maldistill::eval {

namespace {

// Returns NaN and clears `defined` when the denominator is zero.
double ratio(std::size_t num, std::size_t den, bool& defined) {
  defined = den > 0;
  if (!defined) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  if (m.total() == 0) throw std::invalid_argument("metrics: no samples");
  bool unused = true;
  m.accuracy = ratio(tp + tn, m.total(), unused);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.f1_defined);
  m.fpr = ratio(fp, fp + tn, m.fpr_defined);
  m.fnr = ratio(fn, fn + tp, m.fnr_defined);
  return m;
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.empty()) throw std::invalid_argument("metrics: no predictions");
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(labels.size()) + " labels");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw std::invalid_argument("metrics: predictions and labels must be 0 or 1");
    }
    if (p == 1 && y == 1) ++tp;
    if (p == 1 && y == 0) ++fp;
    if (p == 0 && y == 0) ++tn;
    if (p == 0 && y == 1) ++fn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

nlohmann::json to_json(const Metrics& m) {
  auto rate = [](double v, bool defined) { return defined ? nlohmann::json(v) : nlohmann::json(); };
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"n", m.total()},
          {"accuracy", m.accuracy},
          {"f1", rate(m.f1, m.f1_defined)},
          {"fpr", rate(m.fpr, m.fpr_defined)},
          {"fnr", rate(m.fnr, m.fnr_defined)},
          {"f1_defined", m.f1_defined},
          {"fpr_defined", m.fpr_defined},
          {"fnr_defined", m.fnr_defined}};
}

}  // namespace maldistill::eval
