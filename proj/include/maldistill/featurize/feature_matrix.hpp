#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/core/tensor.hpp"

namespace maldistill::featurize {

enum class View : std::uint8_t { ember = 0, opcode = 1, apiarg = 2, aggregate = 3 };
enum class Storage : std::uint8_t { dense = 0, sparse_binary = 1 };

std::string to_string(View v);
View parse_view(const std::string& name);
std::string to_string(Storage s);

using SparseRow = std::vector<std::uint32_t>;

/// Samples x features. Dense rows are float32; sparse-binary rows hold the
/// strictly increasing indices of the set columns.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  static FeatureMatrix dense(View view, std::size_t n_samples, std::size_t n_features);
  static FeatureMatrix sparse(View view, std::size_t n_features);

  View view() const { return view_; }
  Storage storage() const { return storage_; }
  std::size_t n_samples() const { return n_samples_; }
  std::size_t n_features() const { return n_features_; }

  std::span<float> dense_row(std::size_t i);
  std::span<const float> dense_row(std::size_t i) const;
  const SparseRow& sparse_row(std::size_t i) const;
  /// Appends a row to a sparse matrix; throws if the indices are not strictly
  /// increasing or fall outside [0, n_features).
  void push_sparse(SparseRow row);
  /// Appends a row to a dense matrix.
  void push_dense(std::span<const float> row);

  float value(std::size_t i, std::size_t j) const;
  /// Copies row i into a dense buffer of length n_features.
  void fill_row(std::size_t i, std::span<float> out) const;
  /// Stacks the given rows into a [k, n_features] tensor.
  core::TensorF gather(std::span<const std::size_t> rows) const;
  /// Column j as doubles.
  std::vector<double> column(std::size_t j) const;
  /// Keeps only the listed columns, renumbered in the given order.
  FeatureMatrix select_columns(std::span<const std::size_t> kept) const;
  FeatureMatrix select_rows(std::span<const std::size_t> rows) const;

  bool is_binary() const;
  /// Checks the storage invariants and, for opcode/apiarg views, that every
  /// entry is 0 or 1.
  void validate() const;

  std::vector<std::string>& vocabulary() { return vocabulary_; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  View view_ = View::ember;
  Storage storage_ = Storage::dense;
  std::size_t n_samples_ = 0;
  std::size_t n_features_ = 0;
  std::vector<float> dense_;
  std::vector<SparseRow> rows_;
  std::vector<std::string> vocabulary_;
};

/// Column-wise concatenation of matrices with equal sample counts. The result
/// is sparse-binary when every part is, dense otherwise.
FeatureMatrix concat_columns(std::span<const FeatureMatrix> parts, View view);

struct SampleMeta {
  std::vector<std::string> ids;
  std::vector<int> labels;  // 0 benign, 1 malicious, -1 unknown
  nlohmann::json provenance = nlohmann::json::object();
};

struct FeatureFile {
  FeatureMatrix matrix;
  SampleMeta meta;
};

/// Writes <path> (MDF1 body) and <path>.json (manifest).
void store_feature_file(const std::string& path, const FeatureMatrix& m, const SampleMeta& meta);
FeatureFile load_feature_file(const std::string& path);

void write_features(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_features(std::istream& in);

}  // namespace maldistill::featurize
