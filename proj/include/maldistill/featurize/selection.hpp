#pragma once

#include <string>
#include <utility>
#include <vector>

#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::featurize {

struct SelectionReport {
  std::vector<std::size_t> kept;
  /// Per-column scores; filled by select_by_mi, empty for pruning.
  std::vector<double> mi;
  /// (kept column, dropped column) for every correlation drop.
  std::vector<std::pair<std::size_t, std::size_t>> pruned;
  std::vector<std::size_t> constant;
  std::string warning;
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Drops zero-variance columns, then scans the rest by ascending index and
/// drops column j when |r| > threshold against any already kept column.
SelectionReport prune_correlated(const FeatureMatrix& m, double threshold = 0.95);

/// Mutual information in nats between a binary column and binary labels.
double mutual_information(const std::vector<double>& x, const std::vector<int>& y);

/// Nearest-rank percentile of `values` (0 < p <= 100).
double nearest_rank_percentile(std::vector<double> values, double p);

inline constexpr double kMiTieTolerance = 1e-12;

/// Keeps columns whose MI with `labels` is strictly above the given
/// percentile of all column scores.
SelectionReport select_by_mi(const FeatureMatrix& m, const std::vector<int>& labels,
                             double percentile = 98.0);

}  // namespace maldistill::featurize
