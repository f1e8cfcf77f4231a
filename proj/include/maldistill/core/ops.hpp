#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maldistill/core/tensor.hpp"

// Stateless kernels. Batched activations are laid out [N, C, L]; affine
// inputs are [N, D]. Every differentiable kernel has a matching *_backward.
namespace maldistill::core {

/// floor((L + 2P - K) / S) + 1; throws when the window does not fit.
std::size_t conv1d_out_len(std::size_t length, std::size_t kernel,
                           std::size_t stride, std::size_t padding);

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

/// Cross-correlation with zero padding. input [N, C_in, L] (or [C_in, L]),
/// weights [C_out, C_in / groups, K], bias [C_out] or empty.
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias, std::size_t stride, std::size_t padding,
                 std::size_t groups = 1);

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out, std::size_t stride,
                             std::size_t padding, std::size_t groups, bool with_bias);

enum class NormMode { train, eval };

template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  explicit RunningStats(std::size_t channels = 0)
      : mean(channels, T(0)), var(channels, T(1)) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel normalization over (N, L). Train mode uses batch statistics
/// and updates `stats`; eval mode reads them.
template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;
  NormMode mode = NormMode::eval;
};

template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& input, std::span<const T> gamma,
                      std::span<const T> beta, RunningStats<T>& stats,
                      NormMode mode, BatchNormCache<T>* cache = nullptr);

template <typename T>
struct NormGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

template <typename T>
NormGrads<T> batchnorm1d_backward(const BatchNormCache<T>& cache,
                                  std::span<const T> gamma,
                                  const Tensor<T>& grad_out);

/// Normalization across channels at each position (ConvNeXt-style).
template <typename T>
struct LayerNormCache {
  Tensor<T> xhat;
  std::vector<T> inv_std;  // one per (n, l)
};

template <typename T>
Tensor<T> layernorm_channels(const Tensor<T>& input, std::span<const T> gamma,
                             std::span<const T> beta,
                             LayerNormCache<T>* cache = nullptr);

template <typename T>
NormGrads<T> layernorm_channels_backward(const LayerNormCache<T>& cache,
                                         std::span<const T> gamma,
                                         const Tensor<T>& grad_out);

enum class Activation { relu, gelu };

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind);

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& input, Activation kind,
                              const Tensor<T>& grad_out);

/// y = x W + b with x [N, D] (or [D]), W [D, D'], b [D'].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out);

/// Softened softmax exp(z_i / tau) / sum_j exp(z_j / tau), max-subtracted.
template <typename T>
std::vector<T> softmax_tau(std::span<const T> logits, T tau);

/// Row-wise softmax_tau over a [N, K] logit batch.
template <typename T>
Tensor<T> softmax_tau_rows(const Tensor<T>& logits, T tau);

// Thin GEMM shim over CBLAS (row-major). C = alpha op(A) op(B) + beta C.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
          std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace maldistill::core
