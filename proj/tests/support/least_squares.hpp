#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "maldistill/featurize/feature_matrix.hpp"

namespace maldistill::testing {

/// Training accuracy of the ridge least-squares classifier fitted to targets
/// +-1 over the columns of `parts` plus a bias, solved by Cholesky.
inline double least_squares_accuracy(const std::vector<const featurize::FeatureMatrix*>& parts,
                                     const std::vector<int>& labels, double ridge = 1e-6) {
  const std::size_t n = labels.size();
  std::size_t d = 1;
  for (const auto* p : parts) d += p->n_features();
  std::vector<double> x(n * d);
  std::vector<float> row;
  for (std::size_t i = 0; i < n; ++i) {
    double* xi = x.data() + i * d;
    std::size_t off = 0;
    for (const auto* p : parts) {
      row.assign(p->n_features(), 0.0f);
      p->fill_row(i, row);
      for (std::size_t j = 0; j < row.size(); ++j) xi[off + j] = row[j];
      off += row.size();
    }
    xi[off] = 1.0;
  }
  std::vector<double> a(d * d, 0.0), b(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = x.data() + i * d;
    const double t = labels[i] ? 1.0 : -1.0;
    for (std::size_t r = 0; r < d; ++r) {
      b[r] += xi[r] * t;
      for (std::size_t c = 0; c <= r; ++c) a[r * d + c] += xi[r] * xi[c];
    }
  }
  for (std::size_t r = 0; r < d; ++r) a[r * d + r] += ridge * (1.0 + a[r * d + r]);
  // In-place lower Cholesky factor.
  for (std::size_t j = 0; j < d; ++j) {
    double s = a[j * d + j];
    for (std::size_t k = 0; k < j; ++k) s -= a[j * d + k] * a[j * d + k];
    if (!(s > 0)) throw std::runtime_error("least squares: matrix not positive definite");
    a[j * d + j] = std::sqrt(s);
    for (std::size_t i = j + 1; i < d; ++i) {
      double t = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) t -= a[i * d + k] * a[j * d + k];
      a[i * d + j] = t / a[j * d + j];
    }
  }
  std::vector<double> w(b);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) w[i] -= a[i * d + k] * w[k];
    w[i] /= a[i * d + i];
  }
  for (std::size_t i = d; i-- > 0;) {
    for (std::size_t k = i + 1; k < d; ++k) w[i] -= a[k * d + i] * w[k];
    w[i] /= a[i * d + i];
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * w[j];
    hit += (s > 0) == (labels[i] == 1);
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

}  // namespace maldistill::testing
