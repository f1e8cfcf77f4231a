#pragma once

#include <cstddef>
#include <span>

#include "json.hpp"

namespace maldistill::eval {

/// Detection metrics with malicious (label 1) as the positive class. A rate
/// whose denominator is zero is NaN and its *_defined flag is false.
struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0;
  double f1 = 0;
  double fpr = 0;
  double fnr = 0;
  bool f1_defined = true;
  bool fpr_defined = true;
  bool fnr_defined = true;

  std::size_t total() const { return tp + fp + tn + fn; }
};

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels);
/// Metrics from confusion counts alone.
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

/// Undefined rates are written as null.
nlohmann::json to_json(const Metrics& m);

}  // namespace maldistill::eval
