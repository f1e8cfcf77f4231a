#pragma once

// Central finite-difference gradient checking in double precision.

#include <cmath>
#include <functional>
#include <vector>

#include "maldistill/core/layers.hpp"
#include "maldistill/core/random.hpp"
#include "maldistill/nn/model.hpp"

namespace maldistill::testing {

using core::Tensor;
using core::TensorD;

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdRelTol = 1e-4;

/// ||a - n|| / (||a|| + ||n||), the usual gradient-check relative error.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  if (denom < 1e-300) return 0.0;
  return std::sqrt(diff) / denom;
}

/// Numeric gradient of `loss` w.r.t. every entry of `x` (mutated in place
/// and restored).
inline std::vector<double> numeric_grad(std::vector<double>& x,
                                        const std::function<double()>& loss) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + kFdStep;
    const double up = loss();
    x[i] = orig - kFdStep;
    const double down = loss();
    x[i] = orig;
    g[i] = (up - down) / (2 * kFdStep);
  }
  return g;
}

inline TensorD random_tensor(core::Shape shape, core::Rng& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

/// Weighted-sum probe loss sum_i r_i * y_i; its gradient w.r.t. y is r.
inline double probe(const TensorD& y, const TensorD& r) {
  double s = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * r[i];
  return s;
}

struct LayerCheck {
  double input_error = 0;
  double max_param_error = 0;
};

/// Checks d(probe)/d(input) and d(probe)/d(params) of a layer against
/// finite differences. `mode` controls normalization statistics.
inline LayerCheck check_layer(core::Layer<double>& layer, TensorD x, core::Rng& rng,
                              core::Mode mode = core::Mode::train) {
  const core::Mode fd_mode = mode == core::Mode::train ? core::Mode::train : core::Mode::eval;
  TensorD y = layer.forward(x, mode);
  const TensorD r = random_tensor(y.shape(), rng);
  std::vector<core::Param<double>*> params;
  layer.collect_params(params);
  for (auto* p : params) p->zero_grad();
  const TensorD gx = layer.backward(r);

  LayerCheck out;
  auto loss = [&] { return probe(layer.forward(x, fd_mode), r); };
  {
    auto& xs = x.storage();
    const auto num = numeric_grad(xs, loss);
    out.input_error = rel_error(gx.storage(), num);
  }
  for (auto* p : params) {
    const std::vector<double> analytic = p->grad.storage();
    const auto num = numeric_grad(p->value.storage(), loss);
    out.max_param_error = std::max(out.max_param_error, rel_error(analytic, num));
  }
  return out;
}

// Gradient check of a whole network on the probe loss, over a random subset
// of coordinates per parameter tensor.
inline double network_grad_error(nn::Network<double>& net, std::vector<TensorD> views,
                                 core::Rng& rng, core::Mode mode = core::Mode::train) {
  const core::Mode fd_mode = mode == core::Mode::train ? core::Mode::train : core::Mode::eval;
  auto out = net.forward(std::span<const TensorD>(views), mode);
  const TensorD r = random_tensor(out.logits.shape(), rng);
  net.zero_grad();
  net.backward(r);
  auto loss = [&] {
    return probe(net.forward(std::span<const TensorD>(views), fd_mode).logits, r);
  };
  double worst = 0;
  for (auto* p : net.parameters()) {
    std::vector<double> analytic, numeric;
    const std::size_t picks = std::min<std::size_t>(p->value.numel(), 12);
    for (std::size_t t = 0; t < picks; ++t) {
      const std::size_t i = rng.below(p->value.numel());
      const double orig = p->value[i];
      p->value[i] = orig + kFdStep;
      const double up = loss();
      p->value[i] = orig - kFdStep;
      const double down = loss();
      p->value[i] = orig;
      analytic.push_back(p->grad[i]);
      numeric.push_back((up - down) / (2 * kFdStep));
    }
    worst = std::max(worst, rel_error(analytic, numeric));
  }
  return worst;
}

}  // namespace maldistill::testing
