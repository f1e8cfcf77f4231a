#pragma once

#include <memory>
#include <string>
#include <vector>

#include "maldistill/core/ops.hpp"
#include "maldistill/core/random.hpp"
#include "maldistill/core/tensor.hpp"

namespace maldistill::core {

/// Trainable tensor with its gradient slot. `grad` always has the shape of
/// `value`; backward accumulates into it until zero_grad.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T(0)); }
};

/// train: batch statistics + record tape. eval: running statistics, no tape.
/// eval_record: running statistics with tape (used by gradient checks).
enum class Mode { train, eval, eval_record };

inline bool records(Mode m) { return m != Mode::eval; }
inline NormMode norm_mode(Mode m) {
  return m == Mode::train ? NormMode::train : NormMode::eval;
}

class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Consumes the recorded forward; throws TapeError if there is none.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual void collect_params(std::vector<Param<T>*>&) {}
  /// Non-trainable state (running statistics), in a fixed order.
  virtual void collect_buffers(std::vector<std::vector<T>*>&) {}
  virtual std::string describe() const = 0;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv1d final : public Layer<T> {
 public:
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding, std::size_t groups, bool bias,
         Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::string describe() const override;

  Param<T>& weight() { return weight_; }
  std::size_t out_channels() const { return weight_.value.dim(0); }
  std::size_t kernel() const { return weight_.value.dim(2); }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }
  std::size_t groups() const { return groups_; }

 private:
  Param<T> weight_;
  std::unique_ptr<Param<T>> bias_;
  std::size_t stride_, padding_, groups_;
  Tensor<T> input_;
  bool recorded_ = false;
};

template <typename T>
class BatchNorm1d final : public Layer<T> {
 public:
  explicit BatchNorm1d(std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<std::vector<T>*>& out) override;
  std::string describe() const override;

  Param<T>& gamma() { return gamma_; }
  Param<T>& beta() { return beta_; }
  RunningStats<T>& stats() { return stats_; }

 private:
  Param<T> gamma_, beta_;
  RunningStats<T> stats_;
  BatchNormCache<T> cache_;
  bool recorded_ = false;
};

template <typename T>
class LayerNormChannels final : public Layer<T> {
 public:
  explicit LayerNormChannels(std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::string describe() const override;

 private:
  Param<T> gamma_, beta_;
  LayerNormCache<T> cache_;
  bool recorded_ = false;
};

template <typename T>
class ActivationLayer final : public Layer<T> {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::string describe() const override;

 private:
  Activation kind_;
  Tensor<T> input_;
  bool recorded_ = false;
};

/// Affine map over [N, D] inputs; W is [D, D'].
template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::string describe() const override;

  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  std::size_t in_dim() const { return weight_.value.dim(0); }
  std::size_t out_dim() const { return weight_.value.dim(1); }

 private:
  Param<T> weight_, bias_;
  Tensor<T> input_;
  bool recorded_ = false;
};

template <typename T>
class Sequential final : public Layer<T> {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr<T>> layers) : layers_(std::move(layers)) {}

  void push(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<std::vector<T>*>& out) override;
  std::string describe() const override;

 private:
  std::vector<LayerPtr<T>> layers_;
};

/// relu(main(x) + shortcut(x)).
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(Sequential<T> main, Sequential<T> shortcut)
      : main_(std::move(main)), shortcut_(std::move(shortcut)) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  void collect_buffers(std::vector<std::vector<T>*>& out) override;
  std::string describe() const override;

  Sequential<T>& main_path() { return main_; }
  Sequential<T>& shortcut_path() { return shortcut_; }

 private:
  Sequential<T> main_, shortcut_;
  Tensor<T> sum_;
  bool recorded_ = false;
};

/// Kaiming-uniform fan-in: U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng);

}  // namespace maldistill::core
