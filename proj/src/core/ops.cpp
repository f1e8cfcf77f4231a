#include "maldistill/core/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace maldistill::core {

std::size_t conv1d_out_len(std::size_t length, std::size_t kernel,
                           std::size_t stride, std::size_t padding) {
  if (kernel == 0 || stride == 0) {
    throw std::invalid_argument("conv1d_out_len: kernel and stride must be >= 1");
  }
  if (length + 2 * padding < kernel) {
    throw std::invalid_argument(
        "conv1d_out_len: window does not fit (L=" + std::to_string(length) +
        ", K=" + std::to_string(kernel) + ", P=" + std::to_string(padding) + ")");
  }
  return (length + 2 * padding - kernel) / stride + 1;
}

template <>
void gemm<float>(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                 std::size_t k, float alpha, const float* a, std::size_t lda,
                 const float* b, std::size_t ldb, float beta, float* c,
                 std::size_t ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

template <>
void gemm<double>(bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                  std::size_t k, double alpha, const double* a, std::size_t lda,
                  const double* b, std::size_t ldb, double beta, double* c,
                  std::size_t ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

namespace {

struct ConvDims {
  std::size_t batch, c_in, length, c_out, kernel, out_len, groups;
  std::size_t cin_g() const { return c_in / groups; }
  std::size_t cout_g() const { return c_out / groups; }
  std::size_t cols() const { return batch * out_len; }
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weights,
                   std::size_t stride, std::size_t padding, std::size_t groups) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv1d: expected [N, C, L] input, got " +
                                shape_str(input.shape()));
  }
  if (weights.rank() != 3) {
    throw std::invalid_argument("conv1d: expected [C_out, C_in/g, K] weights, got " +
                                shape_str(weights.shape()));
  }
  ConvDims d{};
  d.batch = input.dim(0);
  d.c_in = input.dim(1);
  d.length = input.dim(2);
  d.c_out = weights.dim(0);
  d.kernel = weights.dim(2);
  d.groups = groups;
  if (groups == 0 || d.c_in % groups != 0 || d.c_out % groups != 0 ||
      weights.dim(1) * groups != d.c_in) {
    throw std::invalid_argument(
        "conv1d: channel mismatch, input " + shape_str(input.shape()) +
        " weights " + shape_str(weights.shape()) + " groups " +
        std::to_string(groups));
  }
  d.out_len = conv1d_out_len(d.length, d.kernel, stride, padding);
  return d;
}

// Output positions l in [lo, hi) read x[l*S + k - P] inside the row.
struct ValidRange {
  std::size_t lo, hi;
};

inline ValidRange valid_range(std::size_t k, std::size_t stride, std::size_t padding,
                              std::size_t length, std::size_t out_len) {
  std::size_t lo = 0;
  if (k < padding) lo = (padding - k + stride - 1) / stride;
  std::size_t hi = 0;
  if (length + padding > k) hi = (length + padding - k - 1) / stride + 1;
  hi = std::min(hi, out_len);
  return {std::min(lo, hi), hi};
}

// cols[(c*K + k), n*Lout + l] = x[n, g*cin_g + c, l*S + k - P]
template <typename T>
void im2col(const T* x, const ConvDims& d, std::size_t group, std::size_t stride,
            std::size_t padding, T* cols) {
  const std::size_t ncols = d.cols();
  for (std::size_t k = 0; k < d.kernel; ++k) {
    const ValidRange r = valid_range(k, stride, padding, d.length, d.out_len);
    for (std::size_t c = 0; c < d.cin_g(); ++c) {
      const std::size_t ch = group * d.cin_g() + c;
      T* row = cols + (c * d.kernel + k) * ncols;
      for (std::size_t n = 0; n < d.batch; ++n) {
        const T* src = x + static_cast<std::ptrdiff_t>((n * d.c_in + ch) * d.length + k) -
                       static_cast<std::ptrdiff_t>(padding);
        T* dst = row + n * d.out_len;
        std::fill(dst, dst + r.lo, T(0));
        if (stride == 1) {
          std::copy(src + r.lo, src + r.hi, dst + r.lo);
        } else {
          for (std::size_t l = r.lo; l < r.hi; ++l) dst[l] = src[l * stride];
        }
        std::fill(dst + r.hi, dst + d.out_len, T(0));
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvDims& d, std::size_t group,
                std::size_t stride, std::size_t padding, T* gx) {
  const std::size_t ncols = d.cols();
  for (std::size_t k = 0; k < d.kernel; ++k) {
    const ValidRange r = valid_range(k, stride, padding, d.length, d.out_len);
    for (std::size_t c = 0; c < d.cin_g(); ++c) {
      const std::size_t ch = group * d.cin_g() + c;
      const T* row = cols + (c * d.kernel + k) * ncols;
      for (std::size_t n = 0; n < d.batch; ++n) {
        T* dst = gx + static_cast<std::ptrdiff_t>((n * d.c_in + ch) * d.length + k) -
                 static_cast<std::ptrdiff_t>(padding);
        const T* src = row + n * d.out_len;
        for (std::size_t l = r.lo; l < r.hi; ++l) dst[l * stride] += src[l];
      }
    }
  }
}

// Grow-only scratch storage reused across calls on the same thread.
template <typename T>
T* scratch(std::size_t slot, std::size_t n) {
  thread_local std::vector<T> buffers[3];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return b.data();
}

// Views a rank-2 [C, L] tensor as [1, C, L]; `tmp` holds the reshaped copy.
template <typename T>
const Tensor<T>& as_batch(const Tensor<T>& t, Tensor<T>& tmp) {
  if (t.rank() != 2) return t;
  tmp = t.reshaped({1, t.dim(0), t.dim(1)});
  return tmp;
}

}  // namespace

template <typename T>
Tensor<T> conv1d(const Tensor<T>& input_any, const Tensor<T>& weights,
                 const Tensor<T>& bias, std::size_t stride, std::size_t padding,
                 std::size_t groups) {
  const bool unbatched = input_any.rank() == 2;
  Tensor<T> tmp;
  const Tensor<T>& input = as_batch(input_any, tmp);
  const ConvDims d = conv_dims(input, weights, stride, padding, groups);
  if (!bias.empty() && bias.numel() != d.c_out) {
    throw std::invalid_argument("conv1d: bias length " + std::to_string(bias.numel()) +
                                " != out channels " + std::to_string(d.c_out));
  }
  if (!input.all_finite()) throw std::invalid_argument("conv1d: non-finite input");

  const std::size_t kdim = d.cin_g() * d.kernel;
  const std::size_t ncols = d.cols();
  T* cols = scratch<T>(0, kdim * ncols);
  T* out_mat = scratch<T>(1, d.c_out * ncols);
  for (std::size_t g = 0; g < groups; ++g) {
    im2col(input.data(), d, g, stride, padding, cols);
    gemm<T>(false, false, d.cout_g(), ncols, kdim, T(1),
            weights.data() + g * d.cout_g() * kdim, kdim, cols, ncols, T(0),
            out_mat + g * d.cout_g() * ncols, ncols);
  }
  Tensor<T> out({d.batch, d.c_out, d.out_len});
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.c_out; ++co) {
      const T b = bias.empty() ? T(0) : bias[co];
      const T* src = out_mat + co * ncols + n * d.out_len;
      T* dst = out.data() + (n * d.c_out + co) * d.out_len;
      for (std::size_t l = 0; l < d.out_len; ++l) dst[l] = src[l] + b;
    }
  }
  if (unbatched) out.reshape_inplace({d.c_out, d.out_len});
  return out;
}

template <typename T>
ConvGrads<T> conv1d_backward(const Tensor<T>& input_any, const Tensor<T>& weights,
                             const Tensor<T>& grad_out_any, std::size_t stride,
                             std::size_t padding, std::size_t groups, bool with_bias) {
  const bool unbatched = input_any.rank() == 2;
  Tensor<T> tmp_in, tmp_out;
  const Tensor<T>& input = as_batch(input_any, tmp_in);
  const Tensor<T>& grad_out = as_batch(grad_out_any, tmp_out);
  const ConvDims d = conv_dims(input, weights, stride, padding, groups);
  if (grad_out.shape() != Shape{d.batch, d.c_out, d.out_len}) {
    throw std::invalid_argument("conv1d_backward: grad shape " +
                                shape_str(grad_out.shape()) + " mismatches output");
  }
  const std::size_t kdim = d.cin_g() * d.kernel;
  const std::size_t ncols = d.cols();

  T* gy = scratch<T>(0, d.c_out * ncols);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t co = 0; co < d.c_out; ++co) {
      const T* src = grad_out.data() + (n * d.c_out + co) * d.out_len;
      std::copy(src, src + d.out_len, gy + co * ncols + n * d.out_len);
    }
  }

  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), {}};
  T* cols = scratch<T>(1, kdim * ncols);
  T* gcols = scratch<T>(2, kdim * ncols);
  for (std::size_t grp = 0; grp < groups; ++grp) {
    const T* gy_g = gy + grp * d.cout_g() * ncols;
    const T* w_g = weights.data() + grp * d.cout_g() * kdim;
    im2col(input.data(), d, grp, stride, padding, cols);
    gemm<T>(false, true, d.cout_g(), kdim, ncols, T(1), gy_g, ncols, cols,
            ncols, T(0), g.weights.data() + grp * d.cout_g() * kdim, kdim);
    gemm<T>(true, false, kdim, ncols, d.cout_g(), T(1), w_g, kdim, gy_g, ncols,
            T(0), gcols, ncols);
    col2im_add(gcols, d, grp, stride, padding, g.input.data());
  }
  if (with_bias) {
    g.bias = Tensor<T>({d.c_out});
    for (std::size_t co = 0; co < d.c_out; ++co) {
      T s = 0;
      const T* row = gy + co * ncols;
      for (std::size_t j = 0; j < ncols; ++j) s += row[j];
      g.bias[co] = s;
    }
  }
  if (unbatched) g.input.reshape_inplace({d.c_in, d.length});
  return g;
}

namespace {

struct NormDims {
  std::size_t batch, channels, length;
};

template <typename T>
NormDims norm_dims(const Tensor<T>& x) {
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 2) return {x.dim(0), x.dim(1), 1};
  throw std::invalid_argument("norm: expected [N, C, L] or [N, C], got " +
                              shape_str(x.shape()));
}

}  // namespace

namespace {

// Sum of f(p[l]) over a row with four independent double accumulators.
template <typename T, typename F>
double row_sum(const T* p, std::size_t n, F f) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t l = 0;
  for (; l + 4 <= n; l += 4) {
    s0 += f(p[l]);
    s1 += f(p[l + 1]);
    s2 += f(p[l + 2]);
    s3 += f(p[l + 3]);
  }
  for (; l < n; ++l) s0 += f(p[l]);
  return (s0 + s1) + (s2 + s3);
}

}  // namespace

template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& input, std::span<const T> gamma,
                      std::span<const T> beta, RunningStats<T>& stats,
                      NormMode mode, BatchNormCache<T>* cache) {
  const NormDims d = norm_dims(input);
  if (gamma.size() != d.channels || beta.size() != d.channels ||
      stats.mean.size() != d.channels || stats.var.size() != d.channels) {
    throw std::invalid_argument("batchnorm1d: parameter length mismatch for " +
                                std::to_string(d.channels) + " channels");
  }
  const T eps = static_cast<T>(kBatchNormEps);
  const T mom = static_cast<T>(kBatchNormMomentum);
  const std::size_t count = d.batch * d.length;
  Tensor<T> out(input.shape());
  Tensor<T> xhat;
  if (cache) xhat = Tensor<T>(input.shape());
  std::vector<T> inv_std(d.channels);
  for (std::size_t c = 0; c < d.channels; ++c) {
    T mean, var;
    if (mode == NormMode::train) {
      double s = 0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        s += row_sum(input.data() + (n * d.channels + c) * d.length, d.length,
                     [](T v) { return static_cast<double>(v); });
      }
      const double mean_d = s / static_cast<double>(count);
      mean = static_cast<T>(mean_d);
      double ss = 0;
      for (std::size_t n = 0; n < d.batch; ++n) {
        ss += row_sum(input.data() + (n * d.channels + c) * d.length, d.length, [mean](T v) {
          const double dv = static_cast<double>(v) - mean;
          return dv * dv;
        });
      }
      var = static_cast<T>(ss / static_cast<double>(count));
      const T unbiased =
          count > 1 ? static_cast<T>(ss / static_cast<double>(count - 1)) : var;
      stats.mean[c] = (T(1) - mom) * stats.mean[c] + mom * mean;
      stats.var[c] = (T(1) - mom) * stats.var[c] + mom * unbiased;
    } else {
      mean = stats.mean[c];
      var = stats.var[c];
    }
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[c] = inv;
    const T scale = gamma[c] * inv;
    const T shift = beta[c] - scale * mean;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * d.length;
      const T* x = input.data() + off;
      T* o = out.data() + off;
      for (std::size_t l = 0; l < d.length; ++l) o[l] = scale * x[l] + shift;
      if (cache) {
        T* xh = xhat.data() + off;
        for (std::size_t l = 0; l < d.length; ++l) xh[l] = (x[l] - mean) * inv;
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

template <typename T>
NormGrads<T> batchnorm1d_backward(const BatchNormCache<T>& cache,
                                  std::span<const T> gamma,
                                  const Tensor<T>& grad_out) {
  const NormDims d = norm_dims(grad_out);
  const Tensor<T>& xhat = cache.xhat;
  if (xhat.shape() != grad_out.shape()) {
    throw std::invalid_argument("batchnorm1d_backward: gradient shape " +
                                shape_str(grad_out.shape()) + " mismatches the cache");
  }
  NormGrads<T> g{Tensor<T>(grad_out.shape()), std::vector<T>(d.channels),
                 std::vector<T>(d.channels)};
  const T m = static_cast<T>(d.batch * d.length);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * d.length;
      const T* go = grad_out.data() + off;
      const T* xh = xhat.data() + off;
      sum_g += row_sum(go, d.length, [](T v) { return static_cast<double>(v); });
      T a0 = 0, a1 = 0, a2 = 0, a3 = 0;
      std::size_t l = 0;
      for (; l + 4 <= d.length; l += 4) {
        a0 += go[l] * xh[l];
        a1 += go[l + 1] * xh[l + 1];
        a2 += go[l + 2] * xh[l + 2];
        a3 += go[l + 3] * xh[l + 3];
      }
      for (; l < d.length; ++l) a0 += go[l] * xh[l];
      sum_gx += static_cast<double>((a0 + a1) + (a2 + a3));
    }
    g.beta[c] = static_cast<T>(sum_g);
    g.gamma[c] = static_cast<T>(sum_gx);
    const T scale = gamma[c] * cache.inv_std[c];
    const T mean_g = static_cast<T>(sum_g) / m;
    const T mean_gx = static_cast<T>(sum_gx) / m;
    for (std::size_t n = 0; n < d.batch; ++n) {
      const std::size_t off = (n * d.channels + c) * d.length;
      const T* go = grad_out.data() + off;
      const T* xh = xhat.data() + off;
      T* gi = g.input.data() + off;
      if (cache.mode == NormMode::train) {
        for (std::size_t l = 0; l < d.length; ++l) {
          gi[l] = scale * (go[l] - mean_g - xh[l] * mean_gx);
        }
      } else {
        for (std::size_t l = 0; l < d.length; ++l) gi[l] = scale * go[l];
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> layernorm_channels(const Tensor<T>& input, std::span<const T> gamma,
                             std::span<const T> beta, LayerNormCache<T>* cache) {
  const NormDims d = norm_dims(input);
  if (gamma.size() != d.channels || beta.size() != d.channels) {
    throw std::invalid_argument("layernorm: parameter length mismatch");
  }
  const T eps = static_cast<T>(kBatchNormEps);
  Tensor<T> out(input.shape());
  Tensor<T> xhat(input.shape());
  std::vector<T> inv_std(d.batch * d.length);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t l = 0; l < d.length; ++l) {
      auto idx = [&](std::size_t c) { return (n * d.channels + c) * d.length + l; };
      T mean = 0;
      for (std::size_t c = 0; c < d.channels; ++c) mean += input[idx(c)];
      mean /= static_cast<T>(d.channels);
      T var = 0;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const T dv = input[idx(c)] - mean;
        var += dv * dv;
      }
      var /= static_cast<T>(d.channels);
      const T inv = T(1) / std::sqrt(var + eps);
      inv_std[n * d.length + l] = inv;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const T xh = (input[idx(c)] - mean) * inv;
        xhat[idx(c)] = xh;
        out[idx(c)] = gamma[c] * xh + beta[c];
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
NormGrads<T> layernorm_channels_backward(const LayerNormCache<T>& cache,
                                         std::span<const T> gamma,
                                         const Tensor<T>& grad_out) {
  const NormDims d = norm_dims(grad_out);
  const Tensor<T>& xhat = cache.xhat;
  NormGrads<T> g{Tensor<T>(grad_out.shape()), std::vector<T>(d.channels, T(0)),
                 std::vector<T>(d.channels, T(0))};
  const T cn = static_cast<T>(d.channels);
  for (std::size_t n = 0; n < d.batch; ++n) {
    for (std::size_t l = 0; l < d.length; ++l) {
      auto idx = [&](std::size_t c) { return (n * d.channels + c) * d.length + l; };
      T sum_d = 0, sum_dx = 0;
      for (std::size_t c = 0; c < d.channels; ++c) {
        const T go = grad_out[idx(c)];
        g.beta[c] += go;
        g.gamma[c] += go * xhat[idx(c)];
        const T dxh = go * gamma[c];
        sum_d += dxh;
        sum_dx += dxh * xhat[idx(c)];
      }
      const T inv = cache.inv_std[n * d.length + l];
      for (std::size_t c = 0; c < d.channels; ++c) {
        const T dxh = grad_out[idx(c)] * gamma[c];
        g.input[idx(c)] = inv * (dxh - sum_d / cn - xhat[idx(c)] * sum_dx / cn);
      }
    }
  }
  return g;
}

namespace {

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::sqrt(T(2))));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::sqrt(T(2))));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(M_PI));
  return cdf + x * pdf;
}

}  // namespace

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind) {
  Tensor<T> out(input.shape());
  const std::size_t n = input.numel();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = gelu(input[i]);
  }
  return out;
}

template <typename T>
Tensor<T> activation_backward(const Tensor<T>& input, Activation kind,
                              const Tensor<T>& grad_out) {
  Tensor<T> g(input.shape());
  const std::size_t n = input.numel();
  if (kind == Activation::relu) {
    for (std::size_t i = 0; i < n; ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
  } else {
    for (std::size_t i = 0; i < n; ++i) g[i] = grad_out[i] * gelu_grad(input[i]);
  }
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weights,
                 const Tensor<T>& bias) {
  if (weights.rank() != 2) {
    throw std::invalid_argument("linear: weights must be [D, D'], got " +
                                shape_str(weights.shape()));
  }
  const bool unbatched = input.rank() == 1;
  const std::size_t d_in = weights.dim(0), d_out = weights.dim(1);
  const std::size_t batch = unbatched ? 1 : input.dim(0);
  const std::size_t feat = unbatched ? input.dim(0) : input.numel() / batch;
  if (feat != d_in || (!unbatched && input.rank() != 2)) {
    throw std::invalid_argument("linear: input " + shape_str(input.shape()) +
                                " does not match weights " +
                                shape_str(weights.shape()));
  }
  if (bias.numel() != d_out) {
    throw std::invalid_argument("linear: bias length mismatch");
  }
  Tensor<T> out(unbatched ? Shape{d_out} : Shape{batch, d_out});
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy(bias.data(), bias.data() + d_out, out.data() + n * d_out);
  }
  gemm<T>(false, false, batch, d_out, d_in, T(1), input.data(), d_in,
          weights.data(), d_out, T(1), out.data(), d_out);
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out) {
  const std::size_t d_in = weights.dim(0), d_out = weights.dim(1);
  const std::size_t batch = input.rank() == 1 ? 1 : input.dim(0);
  if (grad_out.numel() != batch * d_out) {
    throw std::invalid_argument("linear_backward: grad shape mismatch");
  }
  LinearGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()),
                   Tensor<T>({d_out})};
  gemm<T>(false, true, batch, d_in, d_out, T(1), grad_out.data(), d_out,
          weights.data(), d_out, T(0), g.input.data(), d_in);
  gemm<T>(true, false, d_in, d_out, batch, T(1), input.data(), d_in,
          grad_out.data(), d_out, T(0), g.weights.data(), d_out);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t j = 0; j < d_out; ++j) g.bias[j] += grad_out[n * d_out + j];
  }
  return g;
}

template <typename T>
std::vector<T> softmax_tau(std::span<const T> logits, T tau) {
  if (!(tau > T(0))) throw std::invalid_argument("softmax_tau: tau must be > 0");
  if (logits.empty()) throw std::invalid_argument("softmax_tau: empty logits");
  T mx = logits[0];
  for (T z : logits) {
    if (!std::isfinite(z)) throw std::invalid_argument("softmax_tau: non-finite logit");
    mx = std::max(mx, z);
  }
  std::vector<T> p(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - mx) / tau);
    sum += p[i];
  }
  for (T& v : p) v /= sum;
  return p;
}

template <typename T>
Tensor<T> softmax_tau_rows(const Tensor<T>& logits, T tau) {
  if (logits.rank() != 2) throw std::invalid_argument("softmax_tau_rows: expected [N, K]");
  const std::size_t k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t n = 0; n < logits.dim(0); ++n) {
    const auto p = softmax_tau<T>(logits.values().subspan(n * k, k), tau);
    std::copy(p.begin(), p.end(), out.data() + n * k);
  }
  return out;
}

#define MALDISTILL_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> conv1d<T>(const Tensor<T>&, const Tensor<T>&,                 \
                               const Tensor<T>&, std::size_t, std::size_t,         \
                               std::size_t);                                       \
  template ConvGrads<T> conv1d_backward<T>(const Tensor<T>&, const Tensor<T>&,     \
                                           const Tensor<T>&, std::size_t,          \
                                           std::size_t, std::size_t, bool);        \
  template Tensor<T> batchnorm1d<T>(const Tensor<T>&, std::span<const T>,          \
                                    std::span<const T>, RunningStats<T>&,          \
                                    NormMode, BatchNormCache<T>*);                 \
  template NormGrads<T> batchnorm1d_backward<T>(                                   \
      const BatchNormCache<T>&, std::span<const T>, const Tensor<T>&);             \
  template Tensor<T> layernorm_channels<T>(const Tensor<T>&, std::span<const T>,   \
                                           std::span<const T>,                     \
                                           LayerNormCache<T>*);                    \
  template NormGrads<T> layernorm_channels_backward<T>(                            \
      const LayerNormCache<T>&, std::span<const T>, const Tensor<T>&);             \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);                  \
  template Tensor<T> activation_backward<T>(const Tensor<T>&, Activation,          \
                                            const Tensor<T>&);                     \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,                 \
                               const Tensor<T>&);                                  \
  template LinearGrads<T> linear_backward<T>(const Tensor<T>&, const Tensor<T>&,   \
                                             const Tensor<T>&);                    \
  template std::vector<T> softmax_tau<T>(std::span<const T>, T);                   \
  template Tensor<T> softmax_tau_rows<T>(const Tensor<T>&, T);

MALDISTILL_INSTANTIATE_OPS(float)
MALDISTILL_INSTANTIATE_OPS(double)

#undef MALDISTILL_INSTANTIATE_OPS

}  // namespace maldistill::core
