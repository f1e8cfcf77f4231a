#include "maldistill/core/optim.hpp"

namespace maldistill::core {

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<Param<T>*> params, SgdConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  velocity_.reserve(params_.size());
  for (auto* p : params_) velocity_.emplace_back(p->value.shape());
}

template <typename T>
void SgdMomentum<T>::step(double lr) {
  const T mom = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  const T rate = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& w = params_[i]->value;
    const auto& g = params_[i]->grad;
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.numel(); ++j) {
      const T gj = g[j] + wd * w[j];
      v[j] = mom * v[j] + gj;
      w[j] -= rate * v[j];
    }
  }
}

template <typename T>
void SgdMomentum<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace maldistill::core
