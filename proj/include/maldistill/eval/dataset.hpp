#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/distill/train.hpp"
#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::eval {

using featurize::FeatureMatrix;
using featurize::View;

/// Aligned feature views of one labelled sample set.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<int> labels;  // 0 benign, 1 malicious
  std::vector<FeatureMatrix> views;
  nlohmann::json provenance = nlohmann::json::object();

  std::size_t size() const { return labels.size(); }
  /// Ids unique, labels binary, every view has one row per sample and a
  /// distinct View tag.
  void validate() const;
  bool has_view(View v) const;
  const FeatureMatrix& view(View v) const;
  Dataset subset(std::span<const std::size_t> rows) const;
  /// Borrowing training view over the given views, in order.
  distill::TrainData train_data(std::span<const View> order) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Writes <dir>/dataset.json plus one feature file per view.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Stratified split: `first` of each class goes to development, the rest to
/// test; development is split again by `second` into train and validation.
/// Counts per class follow largest-remainder rounding of the global targets.
SplitIndices split_dataset(std::span<const int> labels, std::uint64_t seed,
                           double first = 0.8, double second = 0.8);

struct SplitDatasets {
  Dataset train, val, test;
};
SplitDatasets split_dataset(const Dataset& ds, std::uint64_t seed, double first = 0.8,
                            double second = 0.8);

}  // namespace maldistill::eval
