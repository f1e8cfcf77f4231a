#pragma once

#include <vector>

#include "maldistill/core/layers.hpp"

namespace maldistill::core {

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-3;
};

/// Momentum SGD with weight decay folded into the gradient:
///   g' = g + wd * w;  v = momentum * v + g';  w -= lr * v
template <typename T>
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Param<T>*> params, SgdConfig cfg);

  void step(double lr);
  void zero_grad();

  const std::vector<Tensor<T>>& velocity() const { return velocity_; }
  const SgdConfig& config() const { return cfg_; }

 private:
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> velocity_;
  SgdConfig cfg_;
};

}  // namespace maldistill::core
