#include "maldistill/eval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "maldistill/core/random.hpp"

namespace maldistill::eval {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDatasetFormat = "maldistill-dataset-1";

}  // namespace

void Dataset::validate() const {
  if (ids.size() != labels.size()) {
    throw std::invalid_argument("dataset: " + std::to_string(ids.size()) + " ids for " +
                                std::to_string(labels.size()) + " labels");
  }
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw std::invalid_argument("dataset: duplicate sample id " + id);
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("dataset: labels must be 0 or 1");
  }
  std::set<View> tags;
  for (const auto& v : views) {
    if (v.n_samples() != labels.size()) {
      throw std::invalid_argument("dataset: view " + featurize::to_string(v.view()) + " has " +
                                  std::to_string(v.n_samples()) + " rows for " +
                                  std::to_string(labels.size()) + " samples");
    }
    if (!tags.insert(v.view()).second) {
      throw std::invalid_argument("dataset: view " + featurize::to_string(v.view()) +
                                  " appears twice");
    }
    v.validate();
  }
}

bool Dataset::has_view(View v) const {
  return std::any_of(views.begin(), views.end(), [&](const auto& m) { return m.view() == v; });
}

const FeatureMatrix& Dataset::view(View v) const {
  for (const auto& m : views) {
    if (m.view() == v) return m;
  }
  throw std::invalid_argument("dataset has no " + featurize::to_string(v) + " view");
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.provenance = provenance;
  for (auto r : rows) {
    if (r >= size()) throw std::out_of_range("dataset subset: row " + std::to_string(r));
    out.ids.push_back(ids[r]);
    out.labels.push_back(labels[r]);
  }
  for (const auto& v : views) out.views.push_back(v.select_rows(rows));
  return out;
}

distill::TrainData Dataset::train_data(std::span<const View> order) const {
  distill::TrainData d;
  for (auto v : order) d.views.push_back(&view(v));
  d.labels = labels;
  d.ids = ids;
  return d;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  featurize::SampleMeta meta{ds.ids, ds.labels, ds.provenance};
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : ds.views) {
    const std::string file = featurize::to_string(v.view()) + ".mdf";
    featurize::store_feature_file((fs::path(dir) / file).string(), v, meta);
    views.push_back({{"view", featurize::to_string(v.view())}, {"file", file}});
  }
  nlohmann::json manifest = {{"format", kDatasetFormat},
                             {"n_samples", ds.size()},
                             {"views", views},
                             {"provenance", ds.provenance}};
  std::ofstream out(fs::path(dir) / "dataset.json");
  if (!out) throw std::runtime_error("cannot write " + (fs::path(dir) / "dataset.json").string());
  out << manifest.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for " + dir);
}

Dataset load_dataset(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kDatasetFormat) {
    throw std::runtime_error(manifest_path.string() + ": not a dataset manifest");
  }
  Dataset ds;
  ds.provenance = manifest.value("provenance", nlohmann::json::object());
  bool first = true;
  for (const auto& entry : manifest.at("views")) {
    auto file = featurize::load_feature_file((fs::path(dir) / entry.at("file").get<std::string>()).string());
    if (file.matrix.view() != featurize::parse_view(entry.at("view").get<std::string>())) {
      throw std::runtime_error(manifest_path.string() + ": view tag mismatch for " +
                               entry.at("file").get<std::string>());
    }
    if (first) {
      ds.ids = file.meta.ids;
      ds.labels = file.meta.labels;
      first = false;
    } else if (file.meta.ids != ds.ids || file.meta.labels != ds.labels) {
      throw std::runtime_error(manifest_path.string() + ": views disagree on samples");
    }
    ds.views.push_back(std::move(file.matrix));
  }
  if (ds.size() != manifest.at("n_samples").get<std::size_t>()) {
    throw std::runtime_error(manifest_path.string() + ": sample count mismatch");
  }
  ds.validate();
  return ds;
}

namespace {

// Splits `total` across groups in proportion to `sizes` by largest remainder.
std::vector<std::size_t> apportion(const std::vector<std::size_t>& sizes, std::size_t total) {
  const double n = static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}));
  std::vector<std::size_t> out(sizes.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    const double q = static_cast<double>(total) * static_cast<double>(sizes[c]) / n;
    out[c] = std::min(sizes[c], static_cast<std::size_t>(std::floor(q)));
    used += out[c];
    rem.emplace_back(-(q - std::floor(q)), c);
  }
  std::sort(rem.begin(), rem.end());
  for (std::size_t i = 0; used < total && i < rem.size(); ++i) {
    const std::size_t c = rem[i].second;
    if (out[c] < sizes[c]) {
      ++out[c];
      ++used;
    }
  }
  return out;
}

}  // namespace

SplitIndices split_dataset(std::span<const int> labels, std::uint64_t seed, double first,
                           double second) {
  if (labels.size() < 10) {
    throw std::invalid_argument("split_dataset: need at least 10 samples, got " +
                                std::to_string(labels.size()));
  }
  if (!(first > 0 && first < 1) || !(second > 0 && second < 1)) {
    throw std::invalid_argument("split_dataset: ratios must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(2);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("split_dataset: labels must be 0 or 1");
    }
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < 2) {
      throw std::invalid_argument("split_dataset: class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) +
                                  " samples, need at least 2");
    }
  }
  core::Rng rng(seed);
  for (auto& members : by_class) rng.shuffle(members);

  const std::vector<std::size_t> sizes{by_class[0].size(), by_class[1].size()};
  const auto n_test = apportion(
      sizes, static_cast<std::size_t>(std::lround(static_cast<double>(labels.size()) * (1 - first))));
  const std::vector<std::size_t> dev{sizes[0] - n_test[0], sizes[1] - n_test[1]};
  const auto n_val = apportion(
      dev, static_cast<std::size_t>(std::lround(static_cast<double>(dev[0] + dev[1]) * (1 - second))));

  SplitIndices out;
  for (int c = 0; c < 2; ++c) {
    const auto& m = by_class[c];
    out.test.insert(out.test.end(), m.begin(), m.begin() + n_test[c]);
    out.val.insert(out.val.end(), m.begin() + n_test[c], m.begin() + n_test[c] + n_val[c]);
    out.train.insert(out.train.end(), m.begin() + n_test[c] + n_val[c], m.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitDatasets split_dataset(const Dataset& ds, std::uint64_t seed, double first, double second) {
  ds.validate();
  const auto idx = split_dataset(ds.labels, seed, first, second);
  return {ds.subset(idx.train), ds.subset(idx.val), ds.subset(idx.test)};
}

}  // namespace maldistill::eval
