#include <doctest.h>

#include <chrono>
#include <filesystem>

#include "../support/gradcheck.hpp"
#include "maldistill/nn/arch.hpp"
#include "maldistill/nn/model.hpp"

using namespace maldistill;
using core::TensorD;
using core::TensorF;
using nn::ArchitectureSpec;
using nn::BlockVariant;

namespace {

ArchitectureSpec tiny_spec(BlockVariant v, std::size_t final_channels = 16) {
  ArchitectureSpec s;
  s.name = "tiny";
  s.input_dim = 24;
  s.variant = v;
  s.blocks = {{4, 2, 1, 8}, {3, 3, 0, 16}, {4, 1, 0, final_channels}};
  s.head = nn::default_head(final_channels);
  return s;
}

}  // namespace

TEST_CASE("builtin specs reproduce the table rows") {
  auto ember = nn::builtin_spec("ember");
  CHECK(ember.input_dim == 2381);
  REQUIRE(ember.blocks.size() == 5);
  CHECK(ember.blocks[0] == nn::LayerSpec{7, 4, 1, 24});
  CHECK(ember.head == std::vector<std::pair<std::size_t, std::size_t>>{{384, 128}, {128, 2}});

  auto api = nn::builtin_spec("apiarg");
  REQUIRE(api.blocks.size() == 8);
  CHECK(api.blocks.back() == nn::LayerSpec{3, 1, 0, 384});

  auto agg3 = nn::builtin_spec("agg3_org");
  CHECK(agg3.input_dim == 1084295);
  CHECK(agg3.blocks.size() == 8);
  CHECK(nn::builtin_spec("agg2_org").input_dim == 2381 + 1048576);
  CHECK(agg3.input_dim == 2381 + 33338 + 1048576);

  CHECK_THROWS_AS(nn::builtin_spec("resnet50"), std::invalid_argument);
}

TEST_CASE("every builtin chain ends at length 1 with 384 channels") {
  using Chain = std::vector<std::size_t>;
  CHECK(nn::builtin_spec("ember").length_chain() == Chain{2381, 595, 119, 29, 7, 1});
  CHECK(nn::builtin_spec("opcode").length_chain() ==
        Chain{33338, 6667, 1332, 265, 52, 9, 1});
  CHECK(nn::builtin_spec("apiarg").length_chain() ==
        Chain{1048576, 209714, 41942, 5991, 1197, 171, 21, 3, 1});
  CHECK(nn::builtin_spec("agg2_org").length_chain() ==
        Chain{1050957, 175159, 21894, 2736, 682, 135, 32, 7, 1});
  CHECK(nn::builtin_spec("agg3_org").length_chain() ==
        Chain{1084295, 180715, 22589, 2823, 704, 140, 28, 6, 1});
  for (const auto& name : nn::builtin_spec_names()) {
    auto s = nn::builtin_spec(name);
    CHECK_NOTHROW(s.validate());
    CHECK(s.blocks.back().out_channels == 384);
    CHECK(s.latent_dim() == 384);
  }
}

TEST_CASE("desk specs chain to one") {
  for (std::size_t dim : {8u, 100u, 1024u, 2381u, 4096u}) {
    auto s = nn::builtin_spec("desk_" + std::to_string(dim));
    CHECK_NOTHROW(s.validate());
    CHECK(s.latent_dim() == 384);
  }
}

TEST_CASE("spec json round trip and validation") {
  for (const auto& name : nn::builtin_spec_names()) {
    auto s = nn::builtin_spec(name);
    CHECK(nn::spec_from_json(nn::to_json(s)) == s);
  }
  auto broken = nn::builtin_spec("ember");
  broken.blocks.pop_back();
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  auto bad_head = nn::builtin_spec("ember");
  bad_head.head.back().second = 3;
  CHECK_THROWS_AS(bad_head.validate(), std::invalid_argument);
}

TEST_CASE("make_block output geometry") {
  core::Rng rng(1);
  auto ember = nn::builtin_spec("ember");
  auto block = nn::make_block<float>(BlockVariant::resnet1d_k3, ember.blocks[0], 1, 2381, rng);
  TensorF x({2, 1, 2381}, 0.5f);
  auto y = block->forward(x, core::Mode::train);
  CHECK(y.shape() == core::Shape{2, 24, 595});

  for (auto v : {BlockVariant::resnet1d_k3, BlockVariant::resnet1d_k1, BlockVariant::resnext1d,
                 BlockVariant::inverted_resnext1d, BlockVariant::convnext1d}) {
    auto b = nn::make_block<float>(v, {5, 2, 1, 24}, 12, 40, rng);
    auto out = b->forward(TensorF({3, 12, 40}, 0.25f), core::Mode::train);
    CHECK(out.shape() == core::Shape{3, 24, core::conv1d_out_len(40, 5, 2, 1)});
  }
  CHECK(nn::block_mid_channels(BlockVariant::resnext1d, 24) % nn::kCardinality == 0);

  CHECK_THROWS_AS(nn::make_block<float>(BlockVariant::resnet1d_k3, {7, 1, 0, 8}, 1, 4, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(nn::make_block<float>(BlockVariant::resnet1d_k3, {0, 1, 0, 8}, 1, 4, rng),
                  std::invalid_argument);
}

TEST_CASE("zero main path leaves relu(shortcut)") {
  core::Rng rng(2);
  for (auto v : {BlockVariant::resnet1d_k3, BlockVariant::resnet1d_k1, BlockVariant::resnext1d,
                 BlockVariant::inverted_resnext1d, BlockVariant::convnext1d}) {
    auto b = nn::make_block<double>(v, {1, 1, 0, 8}, 8, 10, rng);
    std::vector<core::Param<double>*> main_params;
    b->main_path().collect_params(main_params);
    for (auto* p : main_params) p->value.fill(0.0);
    const auto x = testing::random_tensor({2, 8, 10}, rng);
    auto y = b->forward(x, core::Mode::eval);
    auto s = b->shortcut_path().forward(x, core::Mode::eval);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == std::max(0.0, s[i]));
  }
}

TEST_CASE("forward shapes and zero-model logits") {
  nn::Model<float> ember(nn::builtin_spec("ember"), 3);
  core::Rng rng(5);
  TensorF x({2, 2381});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  auto out = ember.forward(x, core::Mode::eval);
  CHECK(out.latent.shape() == core::Shape{2, 384});
  CHECK(out.logits.shape() == core::Shape{2, 2});
  CHECK_THROWS_AS(ember.forward(TensorF({2, 100}), core::Mode::eval), std::invalid_argument);

  nn::Model<float> zero(nn::builtin_spec("ember"), 4);
  for (auto* p : zero.parameters()) {
    if (p->name == "weight" || p->name == "bias") p->value.fill(0.0f);
  }
  auto& last = dynamic_cast<core::Linear<float>&>(zero.head()[zero.head().size() - 1]);
  last.bias().value[0] = 0.3f;
  last.bias().value[1] = -0.7f;
  auto z = zero.forward(TensorF({1, 2381}), core::Mode::eval);
  CHECK(z.logits[0] == 0.3f);
  CHECK(z.logits[1] == -0.7f);
}

TEST_CASE("opcode latent ends at length one") {
  nn::Model<float> op(nn::builtin_spec("opcode"), 1);
  TensorF x({1, 33338}, 1.0f);
  auto out = op.forward(x, core::Mode::eval);
  CHECK(out.latent.shape() == core::Shape{1, 384});
  CHECK(out.logits.all_finite());
}

TEST_CASE("gradients flow to the first block") {
  nn::Model<float> m(nn::builtin_spec("ember"), 8);
  core::Rng rng(8);
  TensorF x({4, 2381});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  auto out = m.forward(x, core::Mode::train);
  m.zero_grad();
  m.backward(TensorF(out.logits.shape(), 1.0f));
  auto* first = m.parameters().front();
  double norm = 0;
  for (float g : first->grad.values()) norm += double(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("variant networks pass finite-difference checks") {
  core::Rng rng(77);
  for (auto v : {BlockVariant::resnet1d_k3, BlockVariant::resnet1d_k1, BlockVariant::resnext1d,
                 BlockVariant::inverted_resnext1d, BlockVariant::convnext1d}) {
    nn::Model<double> m(tiny_spec(v), 10 + static_cast<int>(v));
    auto x = testing::random_tensor({3, 24}, rng);
    CAPTURE(nn::to_string(v));
    CHECK(testing::network_grad_error(m, {x}, rng) < testing::kFdRelTol);
    CHECK(testing::network_grad_error(m, {x}, rng, core::Mode::eval_record) < testing::kFdRelTol);
  }
}

TEST_CASE("latent aggregation model") {
  std::vector<nn::Model<double>> ex;
  ex.emplace_back(tiny_spec(BlockVariant::resnet1d_k3, 384), 1);
  ex.emplace_back(tiny_spec(BlockVariant::resnet1d_k3, 384), 2);
  auto agg = nn::build_latent_agg<double>(std::move(ex), nn::latent_agg_head(2), 3);
  CHECK(nn::latent_agg_head(2).front().first == 768);
  CHECK(nn::latent_agg_head(3).front().first == 1152);
  core::Rng rng(4);
  std::vector<TensorD> views{testing::random_tensor({3, 24}, rng),
                             testing::random_tensor({3, 24}, rng)};
  auto out = agg->forward(std::span<const TensorD>(views), core::Mode::train);
  CHECK(out.latent.shape() == core::Shape{3, 768});
  CHECK(out.logits.shape() == core::Shape{3, 2});
  CHECK(testing::network_grad_error(*agg, views, rng) < testing::kFdRelTol);

  std::vector<nn::Model<double>> bad;
  bad.emplace_back(tiny_spec(BlockVariant::resnet1d_k3, 16), 1);
  CHECK_THROWS_AS(nn::build_latent_agg<double>(std::move(bad), nn::latent_agg_head(1), 1),
                  std::invalid_argument);
}

TEST_CASE("latent aggregation is symmetric under segment swap") {
  // Two identical extractors and a head whose first layer has mirrored
  // halves: swapping the views must not change the logits.
  auto spec = tiny_spec(BlockVariant::resnet1d_k3, 384);
  std::vector<nn::Model<double>> ex;
  ex.emplace_back(spec, 42);
  ex.emplace_back(spec, 42);
  auto agg = nn::build_latent_agg<double>(std::move(ex), nn::latent_agg_head(2), 9);
  auto& fc = dynamic_cast<core::Linear<double>&>(agg->head()[0]);
  for (std::size_t i = 0; i < 384; ++i)
    for (std::size_t j = 0; j < fc.out_dim(); ++j) fc.weight().value.at(384 + i, j) = fc.weight().value.at(i, j);
  core::Rng rng(12);
  const auto a = testing::random_tensor({2, 24}, rng);
  const auto b = testing::random_tensor({2, 24}, rng);
  std::vector<TensorD> ab{a, b}, ba{b, a};
  auto o1 = agg->forward(std::span<const TensorD>(ab), core::Mode::eval);
  auto o2 = agg->forward(std::span<const TensorD>(ba), core::Mode::eval);
  for (std::size_t i = 0; i < o1.logits.numel(); ++i)
    CHECK(o1.logits[i] == doctest::Approx(o2.logits[i]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "maldistill_ckpt_test";
  fs::remove_all(dir);
  nn::Model<float> m(nn::builtin_spec("desk_256"), 17);
  core::Rng rng(1);
  TensorF x({4, 256});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  m.forward(x, core::Mode::train);  // moves running stats off their defaults
  nn::save_checkpoint(dir.string(), m, {{"seed", 17}});
  auto loaded = nn::load_checkpoint(dir.string());
  CHECK(loaded.manifest["metadata"]["seed"] == 17);
  auto a = m.forward(x, core::Mode::eval).logits;
  auto b = loaded.network->forward(x, core::Mode::eval).logits;
  CHECK(a == b);
  fs::remove_all(dir);
}

TEST_CASE("full-dimension forward is finite for every builtin spec") {
  for (const auto& name : nn::builtin_spec_names()) {
    const auto t0 = std::chrono::steady_clock::now();
    nn::Model<float> m(nn::builtin_spec(name), 99);
    core::Rng rng(100);
    TensorF x({1, m.spec().input_dim});
    for (auto& v : x.values()) v = rng.bernoulli(0.05) ? 1.0f : 0.0f;
    auto out = m.forward(x, core::Mode::eval);
    CAPTURE(name);
    CHECK(out.latent.numel() == 384);
    CHECK(out.logits.numel() == 2);
    CHECK(out.latent.all_finite());
    CHECK(out.logits.all_finite());
    MESSAGE(name << " forward " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s");
  }
}
