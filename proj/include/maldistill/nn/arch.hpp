#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace maldistill::nn {

/// One table row: a residual block's downsampling conv and its width.
struct LayerSpec {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_channels = 1;

  void validate() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class BlockVariant { resnet1d_k3, resnet1d_k1, resnext1d, inverted_resnext1d, convnext1d };

std::string to_string(BlockVariant v);
BlockVariant parse_variant(const std::string& name);

inline constexpr std::size_t kLatentDim = 384;
inline constexpr std::size_t kNumClasses = 2;
inline constexpr std::size_t kCardinality = 8;
inline constexpr std::size_t kExpansion = 4;

struct ArchitectureSpec {
  std::string name;
  std::size_t input_dim = 0;
  std::vector<LayerSpec> blocks;
  BlockVariant variant = BlockVariant::resnet1d_k3;
  std::vector<std::pair<std::size_t, std::size_t>> head;  // (in, out) per affine

  /// Sequence lengths after each block, starting from input_dim.
  std::vector<std::size_t> length_chain() const;
  std::size_t latent_dim() const;
  /// Chain must end at length 1, head must chain and end at 2 classes.
  void validate() const;
  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

/// Names: ember, opcode, apiarg, agg2_org, agg3_org.
ArchitectureSpec builtin_spec(const std::string& name);
std::vector<std::string> builtin_spec_names();

/// Builtin name or path to a JSON spec document.
ArchitectureSpec resolve_spec(const std::string& name_or_path);

nlohmann::json to_json(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_json(const nlohmann::json& j);

/// Default head for a given latent width: latent -> 128 -> 2.
std::vector<std::pair<std::size_t, std::size_t>> default_head(std::size_t latent);

}  // namespace maldistill::nn
