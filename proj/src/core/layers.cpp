#include "maldistill/core/layers.hpp"

#include <cmath>
#include <sstream>

namespace maldistill::core {

namespace {

[[noreturn]] void no_tape(const std::string& who) {
  throw TapeError(who + ": backward without a recorded forward pass");
}

template <typename T>
void add_into(Tensor<T>& acc, const Tensor<T>& g) {
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

template <typename T>
void add_into(Tensor<T>& acc, const std::vector<T>& g) {
  for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += g[i];
}

}  // namespace

template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---- Conv1d

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, std::size_t stride, std::size_t padding,
                  std::size_t groups, bool bias, Rng& rng)
    : weight_("weight", Tensor<T>({out_channels, in_channels / (groups ? groups : 1),
                                   kernel})),
      stride_(stride),
      padding_(padding),
      groups_(groups) {
  if (groups == 0 || in_channels % groups || out_channels % groups) {
    throw std::invalid_argument("Conv1d: channels " + std::to_string(in_channels) +
                                "->" + std::to_string(out_channels) +
                                " not divisible by groups " + std::to_string(groups));
  }
  kaiming_uniform(weight_.value, (in_channels / groups) * kernel, rng);
  if (bias) bias_ = std::make_unique<Param<T>>("bias", Tensor<T>({out_channels}));
}

template <typename T>
Tensor<T> Conv1d<T>::forward(const Tensor<T>& x, Mode mode) {
  static const Tensor<T> no_bias;
  auto y = conv1d(x, weight_.value, bias_ ? bias_->value : no_bias, stride_,
                  padding_, groups_);
  recorded_ = records(mode);
  if (recorded_) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Conv1d<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("Conv1d");
  recorded_ = false;
  auto g = conv1d_backward(input_, weight_.value, grad_out, stride_, padding_,
                           groups_, bias_ != nullptr);
  add_into(weight_.grad, g.weights);
  if (bias_) add_into(bias_->grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void Conv1d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(bias_.get());
}

template <typename T>
std::string Conv1d<T>::describe() const {
  std::ostringstream os;
  os << "Conv1d(" << weight_.value.dim(1) * groups_ << "->" << weight_.value.dim(0)
     << ", k=" << weight_.value.dim(2) << ", s=" << stride_ << ", p=" << padding_;
  if (groups_ > 1) os << ", g=" << groups_;
  os << ")";
  return os.str();
}

// ---- BatchNorm1d

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::size_t channels)
    : gamma_("gamma", Tensor<T>({channels}, T(1))),
      beta_("beta", Tensor<T>({channels}, T(0))),
      stats_(channels) {}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, Mode mode) {
  recorded_ = records(mode);
  return batchnorm1d<T>(x, gamma_.value.values(), beta_.value.values(), stats_,
                        norm_mode(mode), recorded_ ? &cache_ : nullptr);
}

template <typename T>
Tensor<T> BatchNorm1d<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("BatchNorm1d");
  recorded_ = false;
  auto g = batchnorm1d_backward<T>(cache_, gamma_.value.values(), grad_out);
  add_into(gamma_.grad, g.gamma);
  add_into(beta_.grad, g.beta);
  return std::move(g.input);
}

template <typename T>
void BatchNorm1d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
void BatchNorm1d<T>::collect_buffers(std::vector<std::vector<T>*>& out) {
  out.push_back(&stats_.mean);
  out.push_back(&stats_.var);
}

template <typename T>
std::string BatchNorm1d<T>::describe() const {
  return "BatchNorm1d(" + std::to_string(gamma_.value.numel()) + ")";
}

// ---- LayerNormChannels

template <typename T>
LayerNormChannels<T>::LayerNormChannels(std::size_t channels)
    : gamma_("gamma", Tensor<T>({channels}, T(1))),
      beta_("beta", Tensor<T>({channels}, T(0))) {}

template <typename T>
Tensor<T> LayerNormChannels<T>::forward(const Tensor<T>& x, Mode mode) {
  recorded_ = records(mode);
  return layernorm_channels<T>(x, gamma_.value.values(), beta_.value.values(),
                               recorded_ ? &cache_ : nullptr);
}

template <typename T>
Tensor<T> LayerNormChannels<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("LayerNorm");
  recorded_ = false;
  auto g = layernorm_channels_backward<T>(cache_, gamma_.value.values(), grad_out);
  add_into(gamma_.grad, g.gamma);
  add_into(beta_.grad, g.beta);
  return std::move(g.input);
}

template <typename T>
void LayerNormChannels<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

template <typename T>
std::string LayerNormChannels<T>::describe() const {
  return "LayerNorm(" + std::to_string(gamma_.value.numel()) + ")";
}

// ---- ActivationLayer

template <typename T>
Tensor<T> ActivationLayer<T>::forward(const Tensor<T>& x, Mode mode) {
  recorded_ = records(mode);
  if (recorded_) input_ = x;
  return activation(x, kind_);
}

template <typename T>
Tensor<T> ActivationLayer<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("Activation");
  recorded_ = false;
  return activation_backward(input_, kind_, grad_out);
}

template <typename T>
std::string ActivationLayer<T>::describe() const {
  return kind_ == Activation::relu ? "ReLU" : "GELU";
}

// ---- Linear

template <typename T>
Linear<T>::Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng)
    : weight_("weight", Tensor<T>({in_dim, out_dim})),
      bias_("bias", Tensor<T>({out_dim})) {
  kaiming_uniform(weight_.value, in_dim, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, Mode mode) {
  auto y = linear(x, weight_.value, bias_.value);
  recorded_ = records(mode);
  if (recorded_) input_ = x;
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("Linear");
  recorded_ = false;
  auto g = linear_backward(input_, weight_.value, grad_out);
  add_into(weight_.grad, g.weights);
  add_into(bias_.grad, g.bias);
  return std::move(g.input);
}

template <typename T>
void Linear<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

template <typename T>
std::string Linear<T>::describe() const {
  return "Linear(" + std::to_string(in_dim()) + "x" + std::to_string(out_dim()) + ")";
}

// ---- Sequential

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  if (layers_.empty()) return x;
  Tensor<T> h = layers_.front()->forward(x, mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& grad_out) {
  if (layers_.empty()) return grad_out;
  Tensor<T> g = layers_.back()->backward(grad_out);
  for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i]->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

template <typename T>
void Sequential<T>::collect_buffers(std::vector<std::vector<T>*>& out) {
  for (auto& l : layers_) l->collect_buffers(out);
}

template <typename T>
std::string Sequential<T>::describe() const {
  std::string s = "[";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i) s += ", ";
    s += layers_[i]->describe();
  }
  return s + "]";
}

// ---- ResidualBlock

template <typename T>
Tensor<T> ResidualBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> a = main_.forward(x, mode);
  const Tensor<T> s = shortcut_.forward(x, mode);
  if (a.shape() != s.shape()) {
    throw std::invalid_argument("ResidualBlock: main path " + shape_str(a.shape()) +
                                " vs shortcut " + shape_str(s.shape()));
  }
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += s[i];
  recorded_ = records(mode);
  if (recorded_) sum_ = a;
  for (auto& v : a.values()) v = v > T(0) ? v : T(0);
  return a;
}

template <typename T>
Tensor<T> ResidualBlock<T>::backward(const Tensor<T>& grad_out) {
  if (!recorded_) no_tape("ResidualBlock");
  recorded_ = false;
  Tensor<T> g(grad_out.shape());
  for (std::size_t i = 0; i < g.numel(); ++i) {
    g[i] = sum_[i] > T(0) ? grad_out[i] : T(0);
  }
  Tensor<T> gx = main_.backward(g);
  const Tensor<T> gs = shortcut_.backward(g);
  for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gs[i];
  return gx;
}

template <typename T>
void ResidualBlock<T>::collect_params(std::vector<Param<T>*>& out) {
  main_.collect_params(out);
  shortcut_.collect_params(out);
}

template <typename T>
void ResidualBlock<T>::collect_buffers(std::vector<std::vector<T>*>& out) {
  main_.collect_buffers(out);
  shortcut_.collect_buffers(out);
}

template <typename T>
std::string ResidualBlock<T>::describe() const {
  return "Residual(main=" + main_.describe() + ", shortcut=" + shortcut_.describe() +
         ")";
}

#define MALDISTILL_INSTANTIATE_LAYERS(T)                          \
  template void kaiming_uniform<T>(Tensor<T>&, std::size_t, Rng&); \
  template class Conv1d<T>;                                       \
  template class BatchNorm1d<T>;                                  \
  template class LayerNormChannels<T>;                            \
  template class ActivationLayer<T>;                              \
  template class Linear<T>;                                       \
  template class Sequential<T>;                                   \
  template class ResidualBlock<T>;

MALDISTILL_INSTANTIATE_LAYERS(float)
MALDISTILL_INSTANTIATE_LAYERS(double)

}  // namespace maldistill::core
