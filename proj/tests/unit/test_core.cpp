#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/gradcheck.hpp"
#include "maldistill/core/layers.hpp"
#include "maldistill/core/ops.hpp"
#include "maldistill/core/optim.hpp"
#include "maldistill/core/tensor.hpp"

using namespace maldistill;
using core::Tensor;
using core::TensorD;
using core::TensorF;

namespace {

// Direct nested-loop cross-correlation, independent of the im2col path.
TensorD brute_conv(const TensorD& x, const TensorD& w, const TensorD& b, std::size_t s,
                   std::size_t p, std::size_t groups) {
  const std::size_t n = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t cin_g = cin / groups, cout_g = cout / groups;
  const std::size_t out_len = (len + 2 * p - k) / s + 1;
  TensorD y({n, cout, out_len});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t co = 0; co < cout; ++co) {
      const std::size_t g = co / cout_g;
      for (std::size_t l = 0; l < out_len; ++l) {
        double acc = b.empty() ? 0.0 : b[co];
        for (std::size_t ci = 0; ci < cin_g; ++ci)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const long pos = static_cast<long>(l * s + kk) - static_cast<long>(p);
            if (pos < 0 || pos >= static_cast<long>(len)) continue;
            acc += w.at(co, ci, kk) * x.at(i, g * cin_g + ci, pos);
          }
        y.at(i, co, l) = acc;
      }
    }
  return y;
}

TensorD small_ints(core::Shape shape, core::Rng& rng) {
  TensorD t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<double>(static_cast<int>(rng.below(7)) - 3);
  return t;
}

}  // namespace

TEST_CASE("conv1d_out_len closed form") {
  CHECK(core::conv1d_out_len(2381, 7, 4, 1) == 595);
  CHECK(core::conv1d_out_len(33338, 10, 5, 1) == 6667);
  for (std::size_t len : {1u, 5u, 64u, 2381u}) CHECK(core::conv1d_out_len(len, 1, 1, 0) == len);
  CHECK_THROWS_AS(core::conv1d_out_len(3, 7, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(core::conv1d_out_len(10, 0, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(core::conv1d_out_len(10, 3, 0, 0), std::invalid_argument);
  CHECK(core::conv1d_out_len(3, 5, 1, 1) == 1);
}

TEST_CASE("conv1d examples") {
  const TensorD one_ch({1, 3}, std::vector<double>{1, 2, 3});
  const TensorD ident({1, 1, 1}, std::vector<double>{1});
  const TensorD zero_bias({1});
  auto y = core::conv1d(one_ch, ident, zero_bias, 1, 0);
  CHECK(y.shape() == core::Shape{1, 3});
  CHECK(y.storage() == std::vector<double>{1, 2, 3});

  core::Rng rng(7);
  TensorF x({1, 1, 2381});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  TensorF w({24, 1, 7});
  TensorF b({24});
  auto z = core::conv1d(x, w, b, 4, 1);
  CHECK(z.shape() == core::Shape{1, 24, 595});
  for (float v : z.values()) CHECK(v == 0.0f);

  TensorD bad({1, 2, 5});
  CHECK_THROWS_AS(core::conv1d(bad, ident, zero_bias, 1, 0), std::invalid_argument);
  TensorD nan_in({1, 1, 3}, std::vector<double>{1, NAN, 2});
  CHECK_THROWS_AS(core::conv1d(nan_in, ident, zero_bias, 1, 0), std::invalid_argument);
}

TEST_CASE("conv1d matches nested-loop oracle exactly on random shapes") {
  core::Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t groups = (trial % 3 == 0) ? 2 : 1;
    const std::size_t cin = groups * (1 + rng.below(2));
    const std::size_t cout = groups * (1 + rng.below(2));
    const std::size_t k = 1 + rng.below(5);
    const std::size_t p = rng.below(3);
    const std::size_t s = 1 + rng.below(4);
    const std::size_t len = std::max<std::size_t>(k, 1 + rng.below(64));
    const std::size_t n = 1 + rng.below(3);
    // Small integers keep every partial sum exact, so ordering cannot matter.
    const auto x = small_ints({n, cin, len}, rng);
    const auto w = small_ints({cout, cin / groups, k}, rng);
    const auto b = small_ints({cout}, rng);
    const auto got = core::conv1d(x, w, b, s, p, groups);
    const auto want = brute_conv(x, w, b, s, p, groups);
    REQUIRE(got.shape() == want.shape());
    CHECK(got.storage() == want.storage());
  }
}

TEST_CASE("batchnorm1d examples") {
  std::vector<double> gamma{1.0}, beta{0.0};
  core::RunningStats<double> stats(1);
  TensorD constant({4, 1, 3}, 2.5);
  auto y = core::batchnorm1d<double>(constant, gamma, beta, stats, core::NormMode::train);
  for (double v : y.values()) CHECK(v == 0.0);

  std::vector<double> g0{0.0}, b7{0.7};
  core::RunningStats<double> s2(1);
  TensorD rnd({3, 1, 4});
  core::Rng rng(1);
  for (auto& v : rnd.values()) v = rng.normal();
  auto z = core::batchnorm1d<double>(rnd, g0, b7, s2, core::NormMode::train);
  for (double v : z.values()) CHECK(v == doctest::Approx(0.7));

  // {-1, +1}: mean 0, var 1 -> x / sqrt(1 + 1e-5).
  TensorD pm({2, 1, 1}, std::vector<double>{-1, 1});
  core::RunningStats<double> s3(1);
  auto q = core::batchnorm1d<double>(pm, gamma, beta, s3, core::NormMode::train);
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(q[0] == doctest::Approx(-expect).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(expect).epsilon(1e-12));
  // Running stats: momentum 0.1 toward batch mean 0 and unbiased var 2.
  CHECK(s3.mean[0] == doctest::Approx(0.0));
  CHECK(s3.var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 2.0));

  // Eval before any training step uses mean 0, var 1.
  core::RunningStats<double> fresh(1);
  auto e = core::batchnorm1d<double>(pm, gamma, beta, fresh, core::NormMode::eval);
  CHECK(e[1] == doctest::Approx(expect).epsilon(1e-12));

  std::vector<double> wrong{1.0, 1.0};
  CHECK_THROWS_AS(core::batchnorm1d<double>(pm, wrong, beta, fresh, core::NormMode::eval),
                  std::invalid_argument);
}

TEST_CASE("activation examples") {
  TensorD x({3}, std::vector<double>{-1, 0, 2});
  CHECK(core::activation(x, core::Activation::relu).storage() == std::vector<double>{0, 0, 2});
  TensorD g({2}, std::vector<double>{0, 1});
  auto y = core::activation(g, core::Activation::gelu);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(0.841345).epsilon(1e-4));
}

TEST_CASE("linear examples") {
  TensorD x({3}, std::vector<double>{1, -2, 3});
  TensorD eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1;
  TensorD zb({3});
  CHECK(core::linear(x, eye, zb).storage() == x.storage());

  TensorD zw({3, 2});
  TensorD b({2}, std::vector<double>{0.5, -1.5});
  CHECK(core::linear(x, zw, b).storage() == b.storage());

  core::Rng rng(3);
  core::Linear<float> fc1(384, 128, rng), fc2(128, 2, rng);
  TensorF latent({1, 384}, 0.1f);
  auto out = fc2.forward(fc1.forward(latent, core::Mode::eval), core::Mode::eval);
  CHECK(out.shape() == core::Shape{1, 2});

  TensorD wrong({4, 2});
  CHECK_THROWS_AS(core::linear(x, wrong, b), std::invalid_argument);
}

TEST_CASE("softmax_tau examples and properties") {
  using V = std::vector<double>;
  for (double tau : {0.1, 1.0, 7.0}) {
    auto p = core::softmax_tau<double>(V{0, 0}, tau);
    CHECK(p[0] == doctest::Approx(0.5));
  }
  auto p = core::softmax_tau<double>(V{2, 0}, 2.0);
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));
  auto s = core::softmax_tau<double>(V{std::log(3.0), 0}, 1.0);
  CHECK(s[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK_THROWS_AS(core::softmax_tau<double>(V{1, 2}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(core::softmax_tau<double>(V{1, 2}, -1.0), std::invalid_argument);

  // Large logits stay finite thanks to max subtraction.
  auto big = core::softmax_tau<double>(V{1000, 999}, 1.0);
  CHECK(std::isfinite(big[0]));

  core::Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 2 + rng.below(6);
    V z(k);
    for (auto& v : z) v = 5 * rng.normal();
    const double tau = 0.05 + 10 * rng.uniform();
    const auto q = core::softmax_tau<double>(z, tau);
    double sum = 0;
    for (double v : q) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-6);
    const auto arg = [](const V& v) {
      return std::max_element(v.begin(), v.end()) - v.begin();
    };
    CHECK(arg(q) == arg(z));
    // Permutation equivariance: reversing z reverses p.
    V zr(z.rbegin(), z.rend());
    const auto qr = core::softmax_tau<double>(zr, tau);
    for (std::size_t i = 0; i < k; ++i) CHECK(qr[i] == doctest::Approx(q[k - 1 - i]));
  }
}

TEST_CASE("sgd_step examples") {
  core::SgdConfig no_wd{0.9, 0.0};
  core::Param<double> w("w", TensorD({1}, 1.0));
  core::SgdMomentum<double> opt({&w}, no_wd);
  w.grad[0] = 1.0;
  opt.step(0.02);
  CHECK(w.value[0] - 1.0 == doctest::Approx(-0.02).epsilon(1e-12));
  const double before = w.value[0];
  w.grad[0] = 1.0;
  opt.step(0.02);
  CHECK(w.value[0] - before == doctest::Approx(-0.038).epsilon(1e-12));

  core::Param<double> z("z", TensorD({3}, 0.25));
  core::SgdMomentum<double> still({&z}, no_wd);
  still.step(0.02);
  CHECK(z.value.storage() == std::vector<double>(3, 0.25));

  // Weight decay folds into the gradient: g' = 0 + 1e-3 * 2.
  core::Param<double> d("d", TensorD({1}, 2.0));
  core::SgdMomentum<double> wd({&d}, core::SgdConfig{});
  wd.step(0.5);
  CHECK(d.value[0] == doctest::Approx(2.0 - 0.5 * 2e-3));
  wd.zero_grad();
  CHECK(d.grad[0] == 0.0);
}

TEST_CASE("backward without tape is rejected") {
  core::Rng rng(5);
  core::Linear<double> fc(3, 2, rng);
  TensorD g({1, 2}, 1.0);
  CHECK_THROWS_AS(fc.backward(g), core::TapeError);
  TensorD x({1, 3}, 1.0);
  fc.forward(x, core::Mode::eval);
  CHECK_THROWS_AS(fc.backward(g), core::TapeError);
  fc.forward(x, core::Mode::train);
  CHECK_NOTHROW(fc.backward(g));
  CHECK_THROWS_AS(fc.backward(g), core::TapeError);
}

TEST_CASE("linear gradient equals input outer structure") {
  core::Rng rng(9);
  core::Linear<double> fc(3, 2, rng);
  TensorD x({1, 3}, std::vector<double>{1, 2, 3});
  fc.forward(x, core::Mode::train);
  fc.weight().zero_grad();
  fc.bias().zero_grad();
  fc.backward(TensorD({1, 2}, 1.0));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(fc.weight().grad.at(i, j) == x[i]);
}

TEST_CASE("finite-difference checks per layer") {
  using testing::check_layer;
  using testing::kFdRelTol;
  core::Rng rng(31);
  for (int trial = 0; trial < 6; ++trial) {
    const std::size_t n = 2 + rng.below(2);
    const std::size_t groups = trial % 2 ? 2 : 1;
    const std::size_t cin = 2 * groups, cout = 2 * groups;
    const std::size_t k = 1 + rng.below(4), s = 1 + rng.below(3), p = rng.below(2);
    const std::size_t len = k + 3 + rng.below(8);
    core::Conv1d<double> conv(cin, cout, k, s, p, groups, true, rng);
    auto res = check_layer(conv, testing::random_tensor({n, cin, len}, rng), rng);
    CHECK(res.input_error < kFdRelTol);
    CHECK(res.max_param_error < kFdRelTol);

    core::BatchNorm1d<double> bn(3);
    bn.gamma().value = testing::random_tensor({3}, rng);
    res = check_layer(bn, testing::random_tensor({n, 3, 5}, rng), rng);
    CHECK(res.input_error < kFdRelTol);
    CHECK(res.max_param_error < kFdRelTol);
    res = check_layer(bn, testing::random_tensor({n, 3, 5}, rng), rng, core::Mode::eval_record);
    CHECK(res.input_error < kFdRelTol);

    core::LayerNormChannels<double> ln(4);
    res = check_layer(ln, testing::random_tensor({n, 4, 3}, rng), rng);
    CHECK(res.input_error < kFdRelTol);
    CHECK(res.max_param_error < kFdRelTol);

    for (auto kind : {core::Activation::relu, core::Activation::gelu}) {
      core::ActivationLayer<double> act(kind);
      res = check_layer(act, testing::random_tensor({n, 7}, rng), rng);
      CHECK(res.input_error < kFdRelTol);
    }

    core::Linear<double> fc(5, 3, rng);
    res = check_layer(fc, testing::random_tensor({n, 5}, rng), rng);
    CHECK(res.input_error < kFdRelTol);
    CHECK(res.max_param_error < kFdRelTol);
  }
}

TEST_CASE("tensor file round trip and corruption") {
  core::Rng rng(4);
  TensorF t({3, 4, 5});
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  std::stringstream ss;
  core::write_tensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "MDT1");
  CHECK(bytes.size() == 4 + 8 + 3 * 8 + 60 * 4);
  std::stringstream in(bytes);
  CHECK(core::read_tensor(in) == t);

  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream bin(bad);
  try {
    core::read_tensor(bin);
    FAIL("expected FormatError");
  } catch (const core::FormatError& e) {
    CHECK(e.offset() == 0);
  }
  std::stringstream trunc(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(core::read_tensor(trunc), core::FormatError);

  CHECK_THROWS_AS(TensorF({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(TensorF({2, 2}, std::vector<float>(3)), std::invalid_argument);
}
