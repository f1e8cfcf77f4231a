#include "maldistill/nn/model.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "maldistill/core/binio.hpp"

namespace maldistill::nn {

using core::ActivationLayer;
using core::BatchNorm1d;
using core::Conv1d;
using core::LayerNormChannels;
using core::Sequential;

std::size_t block_mid_channels(BlockVariant variant, std::size_t out_channels) {
  auto round_up = [](std::size_t v, std::size_t m) { return (v + m - 1) / m * m; };
  switch (variant) {
    case BlockVariant::resnet1d_k3:
    case BlockVariant::resnet1d_k1:
      return std::max<std::size_t>(1, out_channels / 2);
    case BlockVariant::resnext1d:
      return round_up(std::max(out_channels / 2, kCardinality), kCardinality);
    case BlockVariant::inverted_resnext1d:
      return round_up(out_channels * kExpansion, kCardinality);
    case BlockVariant::convnext1d:
      return out_channels * kExpansion;
  }
  return out_channels;
}

template <typename T>
std::unique_ptr<core::ResidualBlock<T>> make_block(BlockVariant variant,
                                                   const LayerSpec& spec,
                                                   std::size_t in_channels,
                                                   std::size_t in_length,
                                                   core::Rng& rng) {
  spec.validate();
  if (in_channels < 1) throw std::invalid_argument("make_block: in_channels must be >= 1");
  // Throws when the row's window cannot fit the incoming length.
  core::conv1d_out_len(in_length, spec.kernel, spec.stride, spec.padding);

  const std::size_t out = spec.out_channels;
  const std::size_t mid = block_mid_channels(variant, out);
  Sequential<T> main;
  if (variant == BlockVariant::convnext1d) {
    main.push(std::make_unique<Conv1d<T>>(in_channels, in_channels, spec.kernel,
                                          spec.stride, spec.padding, in_channels,
                                          true, rng));
    main.push(std::make_unique<LayerNormChannels<T>>(in_channels));
    main.push(std::make_unique<Conv1d<T>>(in_channels, mid, 1, 1, 0, 1, true, rng));
    main.push(std::make_unique<ActivationLayer<T>>(core::Activation::gelu));
    main.push(std::make_unique<Conv1d<T>>(mid, out, 1, 1, 0, 1, true, rng));
  } else {
    const bool k1 = variant == BlockVariant::resnet1d_k1;
    const std::size_t groups =
        (variant == BlockVariant::resnext1d || variant == BlockVariant::inverted_resnext1d)
            ? kCardinality
            : 1;
    main.push(std::make_unique<Conv1d<T>>(in_channels, mid, k1 ? 1 : 3, 1, k1 ? 0 : 1,
                                          1, false, rng));
    main.push(std::make_unique<BatchNorm1d<T>>(mid));
    main.push(std::make_unique<ActivationLayer<T>>(core::Activation::relu));
    main.push(std::make_unique<Conv1d<T>>(mid, mid, spec.kernel, spec.stride,
                                          spec.padding, groups, false, rng));
    main.push(std::make_unique<BatchNorm1d<T>>(mid));
    main.push(std::make_unique<ActivationLayer<T>>(core::Activation::relu));
    main.push(std::make_unique<Conv1d<T>>(mid, out, 1, 1, 0, 1, false, rng));
    main.push(std::make_unique<BatchNorm1d<T>>(out));
  }
  Sequential<T> shortcut;
  shortcut.push(std::make_unique<Conv1d<T>>(in_channels, out, spec.kernel, spec.stride,
                                            spec.padding, 1, false, rng));
  shortcut.push(std::make_unique<BatchNorm1d<T>>(out));
  return std::make_unique<core::ResidualBlock<T>>(std::move(main), std::move(shortcut));
}

namespace {

template <typename T>
Sequential<T> make_head(const std::vector<std::pair<std::size_t, std::size_t>>& dims,
                        core::Rng& rng) {
  Sequential<T> head;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) head.push(std::make_unique<ActivationLayer<T>>(core::Activation::relu));
    head.push(std::make_unique<core::Linear<T>>(dims[i].first, dims[i].second, rng));
  }
  return head;
}

template <typename T>
void check_view(const Tensor<T>& x, std::size_t dim, const std::string& who) {
  if (x.rank() != 2 || x.dim(1) != dim) {
    throw std::invalid_argument(who + ": expected input [N, " + std::to_string(dim) +
                                "], got " + core::shape_str(x.shape()));
  }
}

}  // namespace

template <typename T>
Model<T>::Model(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  core::Rng rng(seed);
  std::size_t channels = 1;
  std::size_t length = spec_.input_dim;
  for (const auto& row : spec_.blocks) {
    extractor_.push(make_block<T>(spec_.variant, row, channels, length, rng));
    channels = row.out_channels;
    length = core::conv1d_out_len(length, row.kernel, row.stride, row.padding);
  }
  head_ = make_head<T>(spec_.head, rng);
}

template <typename T>
Tensor<T> Model<T>::extract(const Tensor<T>& x, Mode mode) {
  check_view(x, spec_.input_dim, "Model(" + spec_.name + ")");
  const std::size_t n = x.dim(0);
  Tensor<T> h = extractor_.forward(x.reshaped({n, 1, spec_.input_dim}), mode);
  h.reshape_inplace({n, h.numel() / n});
  return h;
}

template <typename T>
void Model<T>::backward_latent(const Tensor<T>& grad_latent) {
  const std::size_t n = grad_latent.dim(0);
  const auto& last = spec_.blocks.back();
  extractor_.backward(grad_latent.reshaped({n, last.out_channels, 1}));
}

template <typename T>
ModelOutput<T> Model<T>::forward(std::span<const Tensor<T>> views, Mode mode) {
  if (views.size() != 1) {
    throw std::invalid_argument("Model: expected 1 view, got " +
                                std::to_string(views.size()));
  }
  ModelOutput<T> out;
  out.latent = extract(views[0], mode);
  out.logits = head_.forward(out.latent, mode);
  return out;
}

template <typename T>
void Model<T>::backward(const Tensor<T>& grad_logits) {
  backward_latent(head_.backward(grad_logits));
}

template <typename T>
std::vector<Param<T>*> Model<T>::parameters() {
  std::vector<Param<T>*> out;
  extractor_.collect_params(out);
  head_.collect_params(out);
  return out;
}

template <typename T>
std::vector<std::vector<T>*> Model<T>::buffers() {
  std::vector<std::vector<T>*> out;
  extractor_.collect_buffers(out);
  head_.collect_buffers(out);
  return out;
}

template <typename T>
nlohmann::json Model<T>::structure() const {
  return {{"kind", "single"}, {"spec", to_json(spec_)}};
}

std::vector<std::pair<std::size_t, std::size_t>> latent_agg_head(std::size_t n) {
  return {{n * kLatentDim, 128}, {128, kNumClasses}};
}

template <typename T>
LatentAggModel<T>::LatentAggModel(std::vector<Model<T>> extractors,
                                  std::vector<std::pair<std::size_t, std::size_t>> head_dims,
                                  std::uint64_t seed)
    : extractors_(std::move(extractors)), head_dims_(std::move(head_dims)) {
  if (extractors_.empty()) throw std::invalid_argument("LatentAggModel: no extractors");
  std::size_t total = 0;
  for (const auto& e : extractors_) {
    if (e.spec().latent_dim() != kLatentDim) {
      throw std::invalid_argument("LatentAggModel: extractor " + e.spec().name +
                                  " emits latent " + std::to_string(e.spec().latent_dim()) +
                                  ", expected " + std::to_string(kLatentDim));
    }
    total += kLatentDim;
  }
  if (head_dims_.empty() || head_dims_.front().first != total ||
      head_dims_.back().second != kNumClasses) {
    throw std::invalid_argument("LatentAggModel: head must map " + std::to_string(total) +
                                " -> ... -> 2");
  }
  for (std::size_t i = 1; i < head_dims_.size(); ++i) {
    if (head_dims_[i].first != head_dims_[i - 1].second) {
      throw std::invalid_argument("LatentAggModel: head dims do not chain");
    }
  }
  core::Rng rng(seed);
  head_ = make_head<T>(head_dims_, rng);
}

template <typename T>
ModelOutput<T> LatentAggModel<T>::forward(std::span<const Tensor<T>> views, Mode mode) {
  if (views.size() != extractors_.size()) {
    throw std::invalid_argument("LatentAggModel: expected " +
                                std::to_string(extractors_.size()) + " views, got " +
                                std::to_string(views.size()));
  }
  const std::size_t n = views[0].rank() >= 1 ? views[0].dim(0) : 0;
  const std::size_t k = extractors_.size();
  ModelOutput<T> out;
  out.latent = Tensor<T>({n, k * kLatentDim});
  for (std::size_t e = 0; e < k; ++e) {
    if (views[e].dim(0) != n) {
      throw std::invalid_argument("LatentAggModel: views disagree on batch size");
    }
    const Tensor<T> z = extractors_[e].extract(views[e], mode);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(z.data() + i * kLatentDim, z.data() + (i + 1) * kLatentDim,
                out.latent.data() + i * k * kLatentDim + e * kLatentDim);
    }
  }
  batch_ = n;
  out.logits = head_.forward(out.latent, mode);
  return out;
}

template <typename T>
void LatentAggModel<T>::backward(const Tensor<T>& grad_logits) {
  const Tensor<T> g = head_.backward(grad_logits);
  const std::size_t k = extractors_.size();
  for (std::size_t e = 0; e < k; ++e) {
    Tensor<T> ge({batch_, kLatentDim});
    for (std::size_t i = 0; i < batch_; ++i) {
      std::copy(g.data() + i * k * kLatentDim + e * kLatentDim,
                g.data() + i * k * kLatentDim + (e + 1) * kLatentDim,
                ge.data() + i * kLatentDim);
    }
    extractors_[e].backward_latent(ge);
  }
}

template <typename T>
std::vector<Param<T>*> LatentAggModel<T>::parameters() {
  std::vector<Param<T>*> out;
  for (auto& e : extractors_) e.extractor().collect_params(out);
  head_.collect_params(out);
  return out;
}

template <typename T>
std::vector<std::vector<T>*> LatentAggModel<T>::buffers() {
  std::vector<std::vector<T>*> out;
  for (auto& e : extractors_) e.extractor().collect_buffers(out);
  head_.collect_buffers(out);
  return out;
}

template <typename T>
std::vector<std::size_t> LatentAggModel<T>::input_dims() const {
  std::vector<std::size_t> dims;
  for (const auto& e : extractors_) dims.push_back(e.spec().input_dim);
  return dims;
}

template <typename T>
nlohmann::json LatentAggModel<T>::structure() const {
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : extractors_) ex.push_back(to_json(e.spec()));
  nlohmann::json head = nlohmann::json::array();
  for (const auto& [in, out] : head_dims_) head.push_back({in, out});
  return {{"kind", "latent_agg"}, {"extractors", ex}, {"head", head}};
}

template <typename T>
std::unique_ptr<LatentAggModel<T>> build_latent_agg(
    std::vector<Model<T>> extractors,
    std::vector<std::pair<std::size_t, std::size_t>> head_dims, std::uint64_t seed) {
  return std::make_unique<LatentAggModel<T>>(std::move(extractors), std::move(head_dims),
                                             seed);
}

template <typename T>
std::unique_ptr<Network<T>> build_from_structure(const nlohmann::json& s,
                                                 std::uint64_t seed) {
  const auto kind = s.at("kind").get<std::string>();
  if (kind == "single") return std::make_unique<Model<T>>(spec_from_json(s.at("spec")), seed);
  if (kind == "latent_agg") {
    std::vector<Model<T>> ex;
    std::uint64_t sub = seed;
    for (const auto& e : s.at("extractors")) ex.emplace_back(spec_from_json(e), ++sub);
    std::vector<std::pair<std::size_t, std::size_t>> head;
    for (const auto& h : s.at("head")) {
      head.emplace_back(h.at(0).get<std::size_t>(), h.at(1).get<std::size_t>());
    }
    return std::make_unique<LatentAggModel<T>>(std::move(ex), std::move(head), seed);
  }
  throw std::invalid_argument("unknown network kind: " + kind);
}

void save_checkpoint(const std::string& dir, Network<float>& net,
                     const nlohmann::json& metadata) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "weights.mdt", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint in " + dir);
  nlohmann::json params = nlohmann::json::array();
  for (auto* p : net.parameters()) {
    core::write_tensor(out, p->value);
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  std::size_t nbuf = 0;
  for (auto* b : net.buffers()) {
    core::write_tensor(out, core::TensorF({b->size()}, *b));
    ++nbuf;
  }
  if (!out) throw std::runtime_error("checkpoint write failed in " + dir);
  nlohmann::json manifest = {{"format", "maldistill-checkpoint-1"},
                             {"structure", net.structure()},
                             {"parameters", params},
                             {"buffers", nbuf},
                             {"metadata", metadata}};
  std::ofstream m(fs::path(dir) / "checkpoint.json");
  m << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream m(fs::path(dir) / "checkpoint.json");
  if (!m) throw std::runtime_error("missing checkpoint.json in " + dir);
  LoadedCheckpoint lc;
  m >> lc.manifest;
  lc.network = build_from_structure<float>(lc.manifest.at("structure"), 0);
  std::ifstream in(fs::path(dir) / "weights.mdt", std::ios::binary);
  if (!in) throw std::runtime_error("missing weights.mdt in " + dir);
  std::uint64_t offset = 0;
  auto next = [&]() {
    auto t = core::read_tensor(in, offset);
    offset += 4 + 8 + 8 * t.rank() + 4 * t.numel();
    return t;
  };
  for (auto* p : lc.network->parameters()) {
    auto t = next();
    if (t.shape() != p->value.shape()) {
      throw core::FormatError("checkpoint parameter " + p->name + " has shape " +
                                  core::shape_str(t.shape()) + ", expected " +
                                  core::shape_str(p->value.shape()),
                              offset);
    }
    p->value = std::move(t);
  }
  for (auto* b : lc.network->buffers()) {
    auto t = next();
    if (t.numel() != b->size()) throw core::FormatError("checkpoint buffer size mismatch", offset);
    *b = t.storage();
  }
  return lc;
}

#define MALDISTILL_INSTANTIATE_NN(T)                                                  \
  template std::unique_ptr<core::ResidualBlock<T>> make_block<T>(                      \
      BlockVariant, const LayerSpec&, std::size_t, std::size_t, core::Rng&);           \
  template class Model<T>;                                                             \
  template class LatentAggModel<T>;                                                    \
  template std::unique_ptr<LatentAggModel<T>> build_latent_agg<T>(                     \
      std::vector<Model<T>>, std::vector<std::pair<std::size_t, std::size_t>>,         \
      std::uint64_t);                                                                  \
  template std::unique_ptr<Network<T>> build_from_structure<T>(const nlohmann::json&, \
                                                               std::uint64_t);

MALDISTILL_INSTANTIATE_NN(float)
MALDISTILL_INSTANTIATE_NN(double)

}  // namespace maldistill::nn
