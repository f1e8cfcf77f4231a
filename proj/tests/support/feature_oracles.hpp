#pragma once

#include <cmath>
#include <vector>

#include "maldistill/core/random.hpp"
#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::testing {

inline featurize::FeatureMatrix dense_from(featurize::View view,
                                           const std::vector<std::vector<float>>& rows) {
  auto m = featurize::FeatureMatrix::dense(view, 0, rows.at(0).size());
  for (const auto& r : rows) m.push_dense(r);
  return m;
}

inline featurize::FeatureMatrix random_binary(core::Rng& rng, std::size_t n, std::size_t d, double p,
                                              bool sparse) {
  using featurize::FeatureMatrix;
  using featurize::View;
  auto m = sparse ? FeatureMatrix::sparse(View::opcode, d) : FeatureMatrix::dense(View::opcode, 0, d);
  for (std::size_t i = 0; i < n; ++i) {
    featurize::SparseRow r;
    std::vector<float> dense(d, 0.0f);
    for (std::size_t j = 0; j < d; ++j) {
      if (rng.bernoulli(p)) {
        r.push_back(static_cast<std::uint32_t>(j));
        dense[j] = 1.0f;
      }
    }
    sparse ? m.push_sparse(r) : m.push_dense(dense);
  }
  return m;
}

// Direct joint-table MI, independent of the library's count algebra.
inline double brute_mi(const std::vector<double>& x, const std::vector<int>& y) {
  const double n = static_cast<double>(x.size());
  double mi = 0;
  for (int a = 0; a <= 1; ++a) {
    for (int b = 0; b <= 1; ++b) {
      double pxy = 0, px = 0, py = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        pxy += (x[i] == a && y[i] == b) / n;
        px += (x[i] == a) / n;
        py += (y[i] == b) / n;
      }
      if (pxy > 0) mi += pxy * std::log(pxy / (px * py));
    }
  }
  return mi;
}

}  // namespace maldistill::testing
