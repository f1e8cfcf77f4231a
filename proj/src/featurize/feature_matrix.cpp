#include "maldistill/featurize/feature_matrix.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "maldistill/core/binio.hpp"

namespace maldistill::featurize {

namespace binio = core::binio;
using core::FormatError;

std::string to_string(View v) {
  switch (v) {
    case View::ember: return "ember";
    case View::opcode: return "opcode";
    case View::apiarg: return "apiarg";
    case View::aggregate: return "aggregate";
  }
  return "?";
}

View parse_view(const std::string& name) {
  for (auto v : {View::ember, View::opcode, View::apiarg, View::aggregate}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown feature view: " + name);
}

std::string to_string(Storage s) {
  return s == Storage::dense ? "dense" : "sparse_binary";
}

FeatureMatrix FeatureMatrix::dense(View view, std::size_t n_samples, std::size_t n_features) {
  FeatureMatrix m;
  m.view_ = view;
  m.storage_ = Storage::dense;
  m.n_samples_ = n_samples;
  m.n_features_ = n_features;
  m.dense_.assign(n_samples * n_features, 0.0f);
  return m;
}

FeatureMatrix FeatureMatrix::sparse(View view, std::size_t n_features) {
  FeatureMatrix m;
  m.view_ = view;
  m.storage_ = Storage::sparse_binary;
  m.n_features_ = n_features;
  return m;
}

std::span<float> FeatureMatrix::dense_row(std::size_t i) {
  if (storage_ != Storage::dense) throw std::logic_error("dense_row on a sparse matrix");
  if (i >= n_samples_) throw std::out_of_range("row index out of range");
  return {dense_.data() + i * n_features_, n_features_};
}

std::span<const float> FeatureMatrix::dense_row(std::size_t i) const {
  if (storage_ != Storage::dense) throw std::logic_error("dense_row on a sparse matrix");
  if (i >= n_samples_) throw std::out_of_range("row index out of range");
  return {dense_.data() + i * n_features_, n_features_};
}

const SparseRow& FeatureMatrix::sparse_row(std::size_t i) const {
  if (storage_ != Storage::sparse_binary) throw std::logic_error("sparse_row on a dense matrix");
  return rows_.at(i);
}

static void check_sparse_row(const SparseRow& row, std::size_t n_features) {
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (row[k] >= n_features) {
      throw std::invalid_argument("sparse index " + std::to_string(row[k]) +
                                  " out of range for " + std::to_string(n_features) +
                                  " features");
    }
    if (k > 0 && row[k] <= row[k - 1]) {
      throw std::invalid_argument("sparse indices must be strictly increasing");
    }
  }
}

void FeatureMatrix::push_sparse(SparseRow row) {
  if (storage_ != Storage::sparse_binary) throw std::logic_error("push_sparse on a dense matrix");
  check_sparse_row(row, n_features_);
  rows_.push_back(std::move(row));
  ++n_samples_;
}

void FeatureMatrix::push_dense(std::span<const float> row) {
  if (storage_ != Storage::dense) throw std::logic_error("push_dense on a sparse matrix");
  if (row.size() != n_features_) {
    throw std::invalid_argument("dense row has " + std::to_string(row.size()) +
                                " values, expected " + std::to_string(n_features_));
  }
  dense_.insert(dense_.end(), row.begin(), row.end());
  ++n_samples_;
}

float FeatureMatrix::value(std::size_t i, std::size_t j) const {
  if (j >= n_features_) throw std::out_of_range("column index out of range");
  if (storage_ == Storage::dense) return dense_row(i)[j];
  const auto& r = sparse_row(i);
  return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j)) ? 1.0f : 0.0f;
}

void FeatureMatrix::fill_row(std::size_t i, std::span<float> out) const {
  if (out.size() != n_features_) throw std::invalid_argument("fill_row: buffer length mismatch");
  if (storage_ == Storage::dense) {
    auto r = dense_row(i);
    std::copy(r.begin(), r.end(), out.begin());
    return;
  }
  std::fill(out.begin(), out.end(), 0.0f);
  for (auto j : sparse_row(i)) out[j] = 1.0f;
}

core::TensorF FeatureMatrix::gather(std::span<const std::size_t> rows) const {
  core::TensorF t({rows.size(), n_features_});
  for (std::size_t k = 0; k < rows.size(); ++k) {
    fill_row(rows[k], {t.data() + k * n_features_, n_features_});
  }
  return t;
}

std::vector<double> FeatureMatrix::column(std::size_t j) const {
  if (j >= n_features_) throw std::out_of_range("column index out of range");
  std::vector<double> c(n_samples_);
  for (std::size_t i = 0; i < n_samples_; ++i) c[i] = value(i, j);
  return c;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> kept) const {
  for (auto j : kept) {
    if (j >= n_features_) throw std::out_of_range("select_columns: index out of range");
  }
  FeatureMatrix out;
  out.view_ = view_;
  out.storage_ = storage_;
  out.n_features_ = kept.size();
  if (!vocabulary_.empty()) {
    for (auto j : kept) out.vocabulary_.push_back(vocabulary_[j]);
  }
  if (storage_ == Storage::dense) {
    out.n_samples_ = n_samples_;
    out.dense_.resize(n_samples_ * kept.size());
    for (std::size_t i = 0; i < n_samples_; ++i) {
      for (std::size_t k = 0; k < kept.size(); ++k) {
        out.dense_[i * kept.size() + k] = dense_[i * n_features_ + kept[k]];
      }
    }
    return out;
  }
  std::vector<std::int64_t> remap(n_features_, -1);
  for (std::size_t k = 0; k < kept.size(); ++k) remap[kept[k]] = static_cast<std::int64_t>(k);
  for (const auto& r : rows_) {
    SparseRow nr;
    for (auto j : r) {
      if (remap[j] >= 0) nr.push_back(static_cast<std::uint32_t>(remap[j]));
    }
    std::sort(nr.begin(), nr.end());
    out.push_sparse(std::move(nr));
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
  FeatureMatrix out = storage_ == Storage::dense ? dense(view_, 0, n_features_)
                                                 : sparse(view_, n_features_);
  out.vocabulary_ = vocabulary_;
  for (auto i : rows) {
    if (storage_ == Storage::dense) {
      out.push_dense(dense_row(i));
    } else {
      out.push_sparse(sparse_row(i));
    }
  }
  return out;
}

bool FeatureMatrix::is_binary() const {
  if (storage_ == Storage::sparse_binary) return true;
  return std::all_of(dense_.begin(), dense_.end(), [](float v) { return v == 0.0f || v == 1.0f; });
}

void FeatureMatrix::validate() const {
  if (storage_ == Storage::dense) {
    if (dense_.size() != n_samples_ * n_features_) {
      throw std::logic_error("dense payload does not match the matrix extents");
    }
  } else {
    if (rows_.size() != n_samples_) throw std::logic_error("sparse row count mismatch");
    for (const auto& r : rows_) check_sparse_row(r, n_features_);
  }
  if ((view_ == View::opcode || view_ == View::apiarg) && !is_binary()) {
    throw std::invalid_argument(to_string(view_) + " view must be binary");
  }
  if (!vocabulary_.empty() && vocabulary_.size() != n_features_) {
    throw std::invalid_argument("vocabulary size does not match n_features");
  }
}

FeatureMatrix concat_columns(std::span<const FeatureMatrix> parts, View view) {
  if (parts.empty()) throw std::invalid_argument("concat_columns: no parts");
  const std::size_t n = parts[0].n_samples();
  std::size_t total = 0;
  bool all_sparse = true;
  for (const auto& p : parts) {
    if (p.n_samples() != n) throw std::invalid_argument("concat_columns: sample counts differ");
    total += p.n_features();
    all_sparse = all_sparse && p.storage() == Storage::sparse_binary;
  }
  if (all_sparse) {
    auto out = FeatureMatrix::sparse(view, total);
    for (std::size_t i = 0; i < n; ++i) {
      SparseRow row;
      std::size_t offset = 0;
      for (const auto& p : parts) {
        for (auto j : p.sparse_row(i)) row.push_back(static_cast<std::uint32_t>(offset + j));
        offset += p.n_features();
      }
      out.push_sparse(std::move(row));
    }
    return out;
  }
  auto out = FeatureMatrix::dense(view, n, total);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = out.dense_row(i);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      p.fill_row(i, row.subspan(offset, p.n_features()));
      offset += p.n_features();
    }
  }
  return out;
}

// MDF1: "MDF1", u8 view, u8 storage, 2 reserved bytes, u64 n_samples,
// u64 n_features, then either n*d float32 or, per row, a varint count and
// varint index deltas (the first delta is the first index).
void write_features(std::ostream& out, const FeatureMatrix& m) {
  m.validate();
  out.write("MDF1", 4);
  binio::put_u8(out, static_cast<std::uint8_t>(m.view()));
  binio::put_u8(out, static_cast<std::uint8_t>(m.storage()));
  binio::put_u8(out, 0);
  binio::put_u8(out, 0);
  binio::put_u64(out, m.n_samples());
  binio::put_u64(out, m.n_features());
  for (std::size_t i = 0; i < m.n_samples(); ++i) {
    if (m.storage() == Storage::dense) {
      auto r = m.dense_row(i);
      out.write(reinterpret_cast<const char*>(r.data()),
                static_cast<std::streamsize>(r.size() * sizeof(float)));
    } else {
      const auto& r = m.sparse_row(i);
      binio::put_varint(out, r.size());
      std::uint32_t prev = 0;
      for (std::size_t k = 0; k < r.size(); ++k) {
        binio::put_varint(out, k == 0 ? r[k] : r[k] - prev);
        prev = r[k];
      }
    }
  }
  if (!out) throw std::runtime_error("failed writing feature payload");
}

FeatureMatrix read_features(std::istream& in) {
  binio::Reader rd(in, 0);
  rd.magic("MDF1");
  const auto view_at = rd.offset();
  const auto view_tag = rd.u8("view tag");
  if (view_tag > static_cast<std::uint8_t>(View::aggregate)) {
    throw FormatError("unknown view tag " + std::to_string(view_tag), view_at);
  }
  const auto storage_at = rd.offset();
  const auto storage_tag = rd.u8("storage kind");
  if (storage_tag > 1) {
    throw FormatError("unknown storage kind " + std::to_string(storage_tag), storage_at);
  }
  rd.u8("reserved");
  rd.u8("reserved");
  const auto n = rd.u64("n_samples");
  const auto d_at = rd.offset();
  const auto d = rd.u64("n_features");
  if (d == 0 || d > (1ull << 32)) throw FormatError("implausible n_features", d_at);
  const auto view = static_cast<View>(view_tag);

  if (storage_tag == 0) {
    auto m = FeatureMatrix::dense(view, 0, d);
    std::vector<float> row(d);
    for (std::uint64_t i = 0; i < n; ++i) {
      rd.bytes(reinterpret_cast<char*>(row.data()), d * sizeof(float), "dense payload");
      m.push_dense(row);
    }
    return m;
  }
  auto m = FeatureMatrix::sparse(view, d);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto count_at = rd.offset();
    const auto count = rd.varint("row length");
    if (count > d) throw FormatError("row length exceeds n_features", count_at);
    SparseRow row(count);
    std::uint64_t idx = 0;
    for (std::uint64_t k = 0; k < count; ++k) {
      const auto at = rd.offset();
      const auto delta = rd.varint("index delta");
      if (k > 0 && delta == 0) throw FormatError("repeated sparse index", at);
      idx = k == 0 ? delta : idx + delta;
      if (idx >= d) throw FormatError("sparse index out of range", at);
      row[k] = static_cast<std::uint32_t>(idx);
    }
    m.push_sparse(std::move(row));
  }
  return m;
}

void store_feature_file(const std::string& path, const FeatureMatrix& m, const SampleMeta& meta) {
  if (!meta.ids.empty() && meta.ids.size() != m.n_samples()) {
    throw std::invalid_argument("sample id count does not match the matrix");
  }
  if (!meta.labels.empty() && meta.labels.size() != m.n_samples()) {
    throw std::invalid_argument("label count does not match the matrix");
  }
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_features(out, m);
  }
  nlohmann::json manifest = {{"format", "maldistill-features-1"},
                             {"view", to_string(m.view())},
                             {"storage", to_string(m.storage())},
                             {"n_samples", m.n_samples()},
                             {"n_features", m.n_features()},
                             {"sample_ids", meta.ids},
                             {"labels", meta.labels},
                             {"provenance", meta.provenance}};
  if (!m.vocabulary().empty()) manifest["vocabulary"] = m.vocabulary();
  std::ofstream out(path + ".json");
  if (!out) throw std::runtime_error("cannot write " + path + ".json");
  out << manifest.dump(1) << '\n';
}

FeatureFile load_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  FeatureFile f;
  f.matrix = read_features(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after payload", static_cast<std::uint64_t>(in.tellg()));
  }

  const std::string manifest_path = path + ".json";
  if (!std::filesystem::exists(manifest_path)) return f;
  std::ifstream min(manifest_path);
  const auto manifest = nlohmann::json::parse(min);
  const auto expect = [&](const char* key, const nlohmann::json& actual) {
    if (manifest.contains(key) && manifest.at(key) != actual) {
      throw std::runtime_error(manifest_path + ": " + key + " is " + manifest.at(key).dump() +
                               " but the feature file has " + actual.dump());
    }
  };
  expect("view", to_string(f.matrix.view()));
  expect("storage", to_string(f.matrix.storage()));
  expect("n_samples", f.matrix.n_samples());
  expect("n_features", f.matrix.n_features());
  f.meta.ids = manifest.value("sample_ids", std::vector<std::string>{});
  f.meta.labels = manifest.value("labels", std::vector<int>{});
  f.meta.provenance = manifest.value("provenance", nlohmann::json::object());
  if (manifest.contains("vocabulary")) {
    f.matrix.vocabulary() = manifest.at("vocabulary").get<std::vector<std::string>>();
  }
  f.matrix.validate();
  if (!f.meta.ids.empty() && f.meta.ids.size() != f.matrix.n_samples()) {
    throw std::runtime_error(manifest_path + ": sample id count does not match the feature file");
  }
  if (!f.meta.labels.empty() && f.meta.labels.size() != f.matrix.n_samples()) {
    throw std::runtime_error(manifest_path + ": label count does not match the feature file");
  }
  return f;
}

}  // namespace maldistill::featurize
