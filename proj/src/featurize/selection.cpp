#include "maldistill/featurize/selection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace maldistill::featurize {

namespace {

// Column-major view: dense doubles, or for sparse-binary input the sorted
// row indices of each column's ones.
struct Columns {
  bool sparse = false;
  std::size_t n = 0;
  std::vector<std::vector<double>> dense;
  std::vector<std::vector<std::uint32_t>> ones;
};

Columns columns_of(const FeatureMatrix& m) {
  Columns c;
  c.n = m.n_samples();
  if (m.storage() == Storage::sparse_binary) {
    c.sparse = true;
    c.ones.resize(m.n_features());
    for (std::size_t i = 0; i < m.n_samples(); ++i) {
      for (auto j : m.sparse_row(i)) c.ones[j].push_back(static_cast<std::uint32_t>(i));
    }
    return c;
  }
  c.dense.assign(m.n_features(), std::vector<double>(m.n_samples()));
  for (std::size_t i = 0; i < m.n_samples(); ++i) {
    auto row = m.dense_row(i);
    for (std::size_t j = 0; j < row.size(); ++j) c.dense[j][i] = row[j];
  }
  return c;
}

std::size_t intersection_size(const std::vector<std::uint32_t>& a,
                              const std::vector<std::uint32_t>& b) {
  std::size_t k = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++k;
      ++i;
      ++j;
    }
  }
  return k;
}

double xlogx_ratio(double pxy, double px, double py) {
  return pxy > 0 ? pxy * std::log(pxy / (px * py)) : 0.0;
}

// MI from the joint counts of a binary column and binary labels.
double mi_from_counts(double n, double n_x1, double n_y1, double n_11) {
  const double n_10 = n_x1 - n_11;
  const double n_01 = n_y1 - n_11;
  const double n_00 = n - n_x1 - n_y1 + n_11;
  const double px1 = n_x1 / n, px0 = 1 - px1;
  const double py1 = n_y1 / n, py0 = 1 - py1;
  return xlogx_ratio(n_11 / n, px1, py1) + xlogx_ratio(n_10 / n, px1, py0) +
         xlogx_ratio(n_01 / n, px0, py1) + xlogx_ratio(n_00 / n, px0, py0);
}

}  // namespace

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("pearson: need two equal-length series of >= 2 values");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

SelectionReport prune_correlated(const FeatureMatrix& m, double threshold) {
  if (m.n_samples() < 2) throw std::invalid_argument("prune_correlated needs >= 2 samples");
  const Columns c = columns_of(m);
  const double n = static_cast<double>(c.n);
  SelectionReport rep;

  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < m.n_features(); ++j) {
    bool constant;
    if (c.sparse) {
      constant = c.ones[j].empty() || c.ones[j].size() == c.n;
    } else {
      const auto& col = c.dense[j];
      constant = std::all_of(col.begin(), col.end(), [&](double v) { return v == col[0]; });
    }
    (constant ? rep.constant : candidates).push_back(j);
  }

  // Dense columns are standardised once so each pair costs one dot product.
  std::vector<std::vector<double>> z;
  if (!c.sparse) {
    z.resize(m.n_features());
    for (auto j : candidates) {
      const auto& col = c.dense[j];
      double mean = 0;
      for (double v : col) mean += v;
      mean /= n;
      double ss = 0;
      for (double v : col) ss += (v - mean) * (v - mean);
      const double inv = 1.0 / std::sqrt(ss);
      z[j].resize(col.size());
      for (std::size_t i = 0; i < col.size(); ++i) z[j][i] = (col[i] - mean) * inv;
    }
  }
  auto corr = [&](std::size_t i, std::size_t j) {
    if (!c.sparse) {
      double s = 0;
      for (std::size_t k = 0; k < c.n; ++k) s += z[i][k] * z[j][k];
      return s;
    }
    const double a = static_cast<double>(c.ones[i].size());
    const double b = static_cast<double>(c.ones[j].size());
    const double ab = static_cast<double>(intersection_size(c.ones[i], c.ones[j]));
    return (n * ab - a * b) / std::sqrt(a * (n - a) * b * (n - b));
  };

  for (auto j : candidates) {
    bool drop = false;
    for (auto i : rep.kept) {
      if (std::abs(corr(i, j)) > threshold) {
        rep.pruned.emplace_back(i, j);
        drop = true;
        break;
      }
    }
    if (!drop) rep.kept.push_back(j);
  }
  return rep;
}

double mutual_information(const std::vector<double>& x, const std::vector<int>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("mutual_information: length mismatch");
  }
  double n_x1 = 0, n_y1 = 0, n_11 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if ((x[i] != 0 && x[i] != 1) || (y[i] != 0 && y[i] != 1)) {
      throw std::invalid_argument("mutual_information: values must be binary");
    }
    n_x1 += x[i];
    n_y1 += y[i];
    n_11 += x[i] * y[i];
  }
  return mi_from_counts(static_cast<double>(x.size()), n_x1, n_y1, n_11);
}

double nearest_rank_percentile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(p > 0 && p <= 100)) throw std::invalid_argument("percentile must be in (0, 100]");
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::max<std::size_t>(rank, 1) - 1];
}

SelectionReport select_by_mi(const FeatureMatrix& m, const std::vector<int>& labels,
                             double percentile) {
  if (labels.size() != m.n_samples()) {
    throw std::invalid_argument("select_by_mi: label count does not match the matrix");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("select_by_mi: labels must be 0 or 1");
  }
  if (!m.is_binary()) throw std::invalid_argument("select_by_mi: features must be binary");

  SelectionReport rep;
  rep.mi.assign(m.n_features(), 0.0);
  const double n = static_cast<double>(m.n_samples());
  double n_y1 = 0;
  for (int y : labels) n_y1 += y;
  if (n_y1 == 0 || n_y1 == n) {
    rep.warning = "labels contain a single class; mutual information is zero everywhere";
    return rep;
  }

  const Columns c = columns_of(m);
  for (std::size_t j = 0; j < m.n_features(); ++j) {
    double n_x1 = 0, n_11 = 0;
    if (c.sparse) {
      n_x1 = static_cast<double>(c.ones[j].size());
      for (auto i : c.ones[j]) n_11 += labels[i];
    } else {
      for (std::size_t i = 0; i < c.n; ++i) {
        n_x1 += c.dense[j][i];
        n_11 += c.dense[j][i] * labels[i];
      }
    }
    rep.mi[j] = mi_from_counts(n, n_x1, n_y1, n_11);
  }
  // Scores equal in exact arithmetic can differ in the last bits depending on
  // which cells of the joint table are populated, so ties are resolved with
  // a small absolute tolerance.
  const double cut = nearest_rank_percentile(rep.mi, percentile) + kMiTieTolerance;
  for (std::size_t j = 0; j < m.n_features(); ++j) {
    if (rep.mi[j] > cut) rep.kept.push_back(j);
  }
  return rep;
}

}  // namespace maldistill::featurize
