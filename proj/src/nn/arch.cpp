#include "maldistill/nn/arch.hpp"

#include <fstream>
#include <stdexcept>

#include "maldistill/core/ops.hpp"

namespace maldistill::nn {

void LayerSpec::validate() const {
  if (kernel < 1 || stride < 1 || out_channels < 1) {
    throw std::invalid_argument("LayerSpec: kernel, stride and out_channels must be >= 1");
  }
}

std::string to_string(BlockVariant v) {
  switch (v) {
    case BlockVariant::resnet1d_k3: return "resnet1d_k3";
    case BlockVariant::resnet1d_k1: return "resnet1d_k1";
    case BlockVariant::resnext1d: return "resnext1d";
    case BlockVariant::inverted_resnext1d: return "inverted_resnext1d";
    case BlockVariant::convnext1d: return "convnext1d";
  }
  return "?";
}

BlockVariant parse_variant(const std::string& name) {
  for (auto v : {BlockVariant::resnet1d_k3, BlockVariant::resnet1d_k1,
                 BlockVariant::resnext1d, BlockVariant::inverted_resnext1d,
                 BlockVariant::convnext1d}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown block variant: " + name);
}

std::vector<std::size_t> ArchitectureSpec::length_chain() const {
  std::vector<std::size_t> chain{input_dim};
  for (const auto& b : blocks) {
    chain.push_back(core::conv1d_out_len(chain.back(), b.kernel, b.stride, b.padding));
  }
  return chain;
}

std::size_t ArchitectureSpec::latent_dim() const {
  if (blocks.empty()) return input_dim;
  return blocks.back().out_channels * length_chain().back();
}

void ArchitectureSpec::validate() const {
  if (input_dim < 1) throw std::invalid_argument("ArchitectureSpec: input_dim must be >= 1");
  if (blocks.empty()) throw std::invalid_argument("ArchitectureSpec: no blocks");
  for (const auto& b : blocks) b.validate();
  const auto chain = length_chain();
  if (chain.back() != 1) {
    throw std::invalid_argument("ArchitectureSpec " + name + ": final length is " +
                                std::to_string(chain.back()) + ", expected 1");
  }
  if (head.empty()) throw std::invalid_argument("ArchitectureSpec: empty head");
  std::size_t width = latent_dim();
  for (const auto& [in, out] : head) {
    if (in != width) {
      throw std::invalid_argument("ArchitectureSpec " + name + ": head input " +
                                  std::to_string(in) + " does not match " +
                                  std::to_string(width));
    }
    width = out;
  }
  if (width != kNumClasses) {
    throw std::invalid_argument("ArchitectureSpec: head must end at 2 classes");
  }
}

std::vector<std::pair<std::size_t, std::size_t>> default_head(std::size_t latent) {
  return {{latent, 128}, {128, kNumClasses}};
}

namespace {

ArchitectureSpec make(const std::string& name, std::size_t dim,
                      std::vector<LayerSpec> rows) {
  ArchitectureSpec s;
  s.name = name;
  s.input_dim = dim;
  s.blocks = std::move(rows);
  s.head = default_head(kLatentDim);
  return s;
}

// Rows are (kernel, stride, padding, out channels).
ArchitectureSpec desk_spec(std::size_t dim) {
  if (dim < 2) throw std::invalid_argument("desk spec needs input_dim >= 2");
  std::vector<LayerSpec> rows;
  std::size_t len = dim;
  while (len >= 16) {
    rows.push_back({8, 4, 2, 0});
    len = core::conv1d_out_len(len, 8, 4, 2);
  }
  rows.push_back({len, 1, 0, 0});
  static constexpr std::size_t widths[] = {384, 192, 96, 48, 24};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t from_end = rows.size() - 1 - i;
    rows[i].out_channels = from_end < 5 ? widths[from_end] : 16;
  }
  return make("desk_" + std::to_string(dim), dim, std::move(rows));
}

}  // namespace

ArchitectureSpec builtin_spec(const std::string& name) {
  if (name == "ember") {
    return make(name, 2381,
                {{7, 4, 1, 24}, {7, 5, 1, 48}, {7, 4, 0, 96}, {7, 4, 1, 192},
                 {7, 1, 0, 384}});
  }
  if (name == "opcode") {
    return make(name, 33338,
                {{10, 5, 1, 16}, {12, 5, 0, 24}, {12, 5, 0, 48}, {10, 5, 0, 96},
                 {12, 5, 0, 192}, {9, 1, 0, 384}});
  }
  if (name == "apiarg") {
    return make(name, 1048576,
                {{11, 5, 0, 16}, {11, 5, 1, 24}, {12, 7, 0, 48}, {11, 5, 0, 72},
                 {11, 7, 2, 96}, {11, 8, 0, 192}, {11, 5, 0, 240}, {3, 1, 0, 384}});
  }
  if (name == "agg2_org") {
    return make(name, 1050957,
                {{11, 6, 1, 16}, {16, 8, 1, 24}, {16, 8, 1, 48}, {12, 4, 0, 96},
                 {12, 5, 0, 192}, {11, 4, 0, 192}, {8, 4, 0, 384}, {7, 1, 0, 384}});
  }
  if (name == "agg3_org") {
    return make(name, 1084295,
                {{11, 6, 0, 16}, {15, 8, 2, 24}, {15, 8, 1, 48}, {11, 4, 0, 96},
                 {11, 5, 1, 192}, {7, 5, 1, 192}, {8, 4, 0, 384}, {6, 1, 0, 384}});
  }
  if (name.rfind("desk_", 0) == 0) {
    return desk_spec(std::stoul(name.substr(5)));
  }
  throw std::invalid_argument("unknown architecture: " + name);
}

std::vector<std::string> builtin_spec_names() {
  return {"ember", "opcode", "apiarg", "agg2_org", "agg3_org"};
}

ArchitectureSpec resolve_spec(const std::string& name_or_path) {
  for (const auto& n : builtin_spec_names()) {
    if (n == name_or_path) return builtin_spec(n);
  }
  if (name_or_path.rfind("desk_", 0) == 0) return builtin_spec(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw std::invalid_argument("unknown architecture or unreadable file: " + name_or_path);
  nlohmann::json j;
  in >> j;
  auto spec = spec_from_json(j);
  spec.validate();
  return spec;
}

nlohmann::json to_json(const ArchitectureSpec& spec) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& b : spec.blocks) {
    rows.push_back({{"kernel", b.kernel},
                    {"stride", b.stride},
                    {"padding", b.padding},
                    {"out_channels", b.out_channels}});
  }
  nlohmann::json head = nlohmann::json::array();
  for (const auto& [in, out] : spec.head) head.push_back({in, out});
  return {{"name", spec.name},
          {"input_dim", spec.input_dim},
          {"variant", to_string(spec.variant)},
          {"blocks", rows},
          {"head", head}};
}

ArchitectureSpec spec_from_json(const nlohmann::json& j) {
  ArchitectureSpec s;
  s.name = j.value("name", std::string("custom"));
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.variant = parse_variant(j.value("variant", std::string("resnet1d_k3")));
  for (const auto& r : j.at("blocks")) {
    s.blocks.push_back({r.at("kernel").get<std::size_t>(), r.at("stride").get<std::size_t>(),
                        r.at("padding").get<std::size_t>(),
                        r.at("out_channels").get<std::size_t>()});
  }
  if (j.contains("head")) {
    for (const auto& h : j.at("head")) {
      s.head.emplace_back(h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>());
    }
  } else {
    s.head = default_head(s.latent_dim());
  }
  return s;
}

}  // namespace maldistill::nn
