#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maldistill/core/layers.hpp"
#include "maldistill/nn/arch.hpp"

namespace maldistill::nn {

using core::Mode;
using core::Param;
using core::Tensor;

template <typename T>
struct ModelOutput {
  Tensor<T> latent;  // [N, latent]
  Tensor<T> logits;  // [N, 2]
};

/// Anything trainable end to end from one or more feature views to logits.
template <typename T>
class Network {
 public:
  virtual ~Network() = default;
  /// views[i] is [N, input_dims()[i]].
  virtual ModelOutput<T> forward(std::span<const Tensor<T>> views, Mode mode) = 0;
  virtual void backward(const Tensor<T>& grad_logits) = 0;
  virtual std::vector<Param<T>*> parameters() = 0;
  virtual std::vector<std::vector<T>*> buffers() = 0;
  virtual std::vector<std::size_t> input_dims() const = 0;
  /// Structure document sufficient to rebuild an untrained copy.
  virtual nlohmann::json structure() const = 0;

  ModelOutput<T> forward(const Tensor<T>& x, Mode mode) {
    return forward(std::span<const Tensor<T>>(&x, 1), mode);
  }
  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

/// Two-path residual block for one table row. Output length is
/// conv1d_out_len(in_length, K, S, P); output channels = spec.out_channels.
template <typename T>
std::unique_ptr<core::ResidualBlock<T>> make_block(BlockVariant variant,
                                                   const LayerSpec& spec,
                                                   std::size_t in_channels,
                                                   std::size_t in_length,
                                                   core::Rng& rng);

/// Width of the bottleneck stage for a variant.
std::size_t block_mid_channels(BlockVariant variant, std::size_t out_channels);

/// Single-view 1D-CNN: residual block stack -> flatten -> affine head.
template <typename T>
class Model final : public Network<T> {
 public:
  Model(ArchitectureSpec spec, std::uint64_t seed);

  using Network<T>::forward;
  ModelOutput<T> forward(std::span<const Tensor<T>> views, Mode mode) override;
  void backward(const Tensor<T>& grad_logits) override;
  std::vector<Param<T>*> parameters() override;
  std::vector<std::vector<T>*> buffers() override;
  std::vector<std::size_t> input_dims() const override { return {spec_.input_dim}; }
  nlohmann::json structure() const override;

  /// [N, D] -> [N, latent].
  Tensor<T> extract(const Tensor<T>& x, Mode mode);
  /// Backward through the extractor only, from a latent gradient.
  void backward_latent(const Tensor<T>& grad_latent);

  const ArchitectureSpec& spec() const { return spec_; }
  core::Sequential<T>& extractor() { return extractor_; }
  core::Sequential<T>& head() { return head_; }

 private:
  ArchitectureSpec spec_;
  core::Sequential<T> extractor_;
  core::Sequential<T> head_;
};

/// Concatenates equal-width latents from several extractors, then applies a
/// feed-forward head. Trains extractors and head jointly.
template <typename T>
class LatentAggModel final : public Network<T> {
 public:
  LatentAggModel(std::vector<Model<T>> extractors,
                 std::vector<std::pair<std::size_t, std::size_t>> head_dims,
                 std::uint64_t seed);

  using Network<T>::forward;
  ModelOutput<T> forward(std::span<const Tensor<T>> views, Mode mode) override;
  void backward(const Tensor<T>& grad_logits) override;
  std::vector<Param<T>*> parameters() override;
  std::vector<std::vector<T>*> buffers() override;
  std::vector<std::size_t> input_dims() const override;
  nlohmann::json structure() const override;

  std::size_t num_extractors() const { return extractors_.size(); }
  core::Sequential<T>& head() { return head_; }

 private:
  std::vector<Model<T>> extractors_;
  core::Sequential<T> head_;
  std::vector<std::pair<std::size_t, std::size_t>> head_dims_;
  std::size_t batch_ = 0;
};

template <typename T>
std::unique_ptr<LatentAggModel<T>> build_latent_agg(
    std::vector<Model<T>> extractors,
    std::vector<std::pair<std::size_t, std::size_t>> head_dims, std::uint64_t seed);

/// Head widths for an aggregation of `n` latents: (n*384)->128->2.
std::vector<std::pair<std::size_t, std::size_t>> latent_agg_head(std::size_t n);

/// Rebuild an (untrained) network from its structure document.
template <typename T>
std::unique_ptr<Network<T>> build_from_structure(const nlohmann::json& structure,
                                                 std::uint64_t seed);

// Checkpoint = <dir>/weights.mdt (MDT1 tensors: parameters then buffers, in
// collection order) + <dir>/checkpoint.json (structure, shapes, metadata).
void save_checkpoint(const std::string& dir, Network<float>& net,
                     const nlohmann::json& metadata);

struct LoadedCheckpoint {
  std::unique_ptr<Network<float>> network;
  nlohmann::json manifest;
};
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace maldistill::nn
