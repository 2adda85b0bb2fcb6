// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mcsp/error.hpp"
#include "mcsp/numcore/autodiff.hpp"
#include "mcsp/numcore/grad_check.hpp"
#include "support.hpp"

namespace mcsp {
namespace {

using ad::Var;
using Fn = std::function<Var(const Var&)>;

// Weighted sum so that every output element gets a distinct cotangent.
Var project(const Var& y, std::uint64_t seed) {
  return ad::sum(ad::mul(y, Var::leaf(test::random_tensor(y.shape(), seed))));
}

double check(const Fn& op, const Tensor& x) {
  return grad_check([&](const Var& v) { return project(op(v), 99); }, x);
}

constexpr double kTol = 1e-6;

TEST(GradCheck, Polynomial) {
  const Tensor x({1}, {3.0});
  Var probe = Var::leaf(x, true);
  auto y = ad::sum(ad::mul(probe, probe));
  y.backward();
  EXPECT_DOUBLE_EQ(probe.grad()[0], 6.0);
  EXPECT_LT(grad_check([](const Var& v) { return ad::sum(ad::mul(v, v)); }, x), 1e-6);
}

TEST(GradCheck, SoftmaxWeighted) {
  const auto c = test::random_tensor({1, 8}, 5);
  const auto x = test::random_tensor({1, 8}, 6);
  EXPECT_LT(grad_check([&](const Var& v) { return ad::sum(ad::mul(ad::softmax_rows(v), Var::leaf(c))); }, x),
            1e-6);
}

TEST(GradCheck, RejectsBadEpsilonAndNonFinite) {
  const Tensor x({2}, {1.0, 2.0});
  auto f = [](const Var& v) { return ad::sum(v); };
  EXPECT_THROW(grad_check(f, x, 1e-3), InvalidArgument);
  EXPECT_THROW(grad_check(f, x, 1e-9), InvalidArgument);
  const Tensor bad({1}, {std::numeric_limits<double>::infinity()});
  EXPECT_THROW(grad_check(f, bad), NumericFailure);
}

TEST(Autodiff, Elementwise) {
  const auto x = test::random_tensor({3, 4}, 1);
  const auto other = Var::leaf(test::random_tensor({3, 4}, 2));
  EXPECT_LT(check([&](const Var& v) { return ad::add(v, other); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::sub(other, v); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::mul(v, other); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::mul(v, v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::affine(v, -2.5, 0.3); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::relu(v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::sigmoid(v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::silu(v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::softplus(v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::exp(v); }, x), kTol);
}

TEST(Autodiff, SoftplusIsStableAndPositive) {
  const Tensor x({3}, {-700.0, 0.0, 800.0});
  const auto y = ad::softplus(Var::leaf(x)).value();
  EXPECT_GT(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[0], std::exp(-700.0));
  EXPECT_NEAR(y[1], std::log(2.0), 1e-15);
  EXPECT_EQ(y[2], 800.0);
}

TEST(Autodiff, LinearAndMatmul) {
  const auto w = test::random_tensor({5, 4}, 3), x = test::random_tensor({4, 6}, 4);
  const auto b = test::random_tensor({5}, 5);
  EXPECT_LT(check([&](const Var& v) { return ad::linear(v, Var::leaf(x), Var::leaf(b)); }, w), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::linear(Var::leaf(w), v, Var::leaf(b)); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::linear(Var::leaf(w), Var::leaf(x), v); }, b), kTol);
  const auto xv = test::random_tensor({4}, 6);
  EXPECT_LT(check([&](const Var& v) { return ad::linear(Var::leaf(w), v, Var::leaf(b)); }, xv), kTol);

  const auto a = test::random_tensor({4, 3}, 7), c = test::random_tensor({4, 5}, 8);
  EXPECT_LT(check([&](const Var& v) { return ad::matmul_tn(v, Var::leaf(c)); }, a), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::matmul_tn(Var::leaf(a), v); }, c), kTol);
  const auto p = test::random_tensor({3, 4}, 9), q = test::random_tensor({5, 4}, 10);
  EXPECT_LT(check([&](const Var& v) { return ad::matmul_nt(v, Var::leaf(q)); }, p), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::matmul_nt(Var::leaf(p), v); }, q), kTol);
}

TEST(Autodiff, NormsAndSoftmax) {
  const auto x = test::random_tensor({6, 5}, 11);
  const auto g = test::random_tensor({6}, 12), b = test::random_tensor({6}, 13);
  EXPECT_LT(check([](const Var& v) { return ad::softmax_rows(v); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::layer_norm_cols(v, Var::leaf(g), Var::leaf(b)); }, x),
            kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::layer_norm_cols(Var::leaf(x), v, Var::leaf(b)); }, g),
            kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::layer_norm_cols(Var::leaf(x), Var::leaf(g), v); }, b),
            kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::affine_rows(v, Var::leaf(g), Var::leaf(b)); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::affine_rows(Var::leaf(x), v, Var::leaf(b)); }, g), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::affine_rows(Var::leaf(x), Var::leaf(g), v); }, b), kTol);
}

TEST(Autodiff, SoftmaxRejectsNonFinite) {
  const Tensor x({1, 2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  EXPECT_THROW(ad::softmax_rows(Var::leaf(x)), NumericFailure);
}

TEST(Autodiff, Convolutions) {
  const auto x = test::random_tensor({2, 2, 5, 4}, 14), w = test::random_tensor({3, 2, 3, 3}, 15);
  const auto b = test::random_tensor({3}, 16);
  EXPECT_LT(check([&](const Var& v) { return ad::conv2d(v, Var::leaf(w), Var::leaf(b)); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::conv2d(Var::leaf(x), v, Var::leaf(b)); }, w), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::conv2d(Var::leaf(x), Var::leaf(w), v); }, b), kTol);

  const auto u = test::random_tensor({4, 7}, 17), k = test::random_tensor({4, 4}, 18);
  const auto kb = test::random_tensor({4}, 19);
  auto dconv = [](const Var& a, const Var& b, const Var& c) { return ad::causal_depthwise_conv(a, b, c); };
  EXPECT_LT(check([&](const Var& v) { return dconv(v, Var::leaf(k), Var::leaf(kb)); }, u), kTol);
  EXPECT_LT(check([&](const Var& v) { return dconv(Var::leaf(u), v, Var::leaf(kb)); }, k), kTol);
  EXPECT_LT(check([&](const Var& v) { return dconv(Var::leaf(u), Var::leaf(k), v); }, kb), kTol);
}

TEST(Autodiff, CausalConvLooksBackOnly) {
  Tensor u({1, 5}, {1, 2, 3, 4, 5});
  Tensor w({1, 3}, {100, 10, 1});  // tap j looks back 2 - j slots
  Tensor b({1}, 0.0);
  const auto y = ad::causal_depthwise_conv(Var::leaf(u), Var::leaf(w), Var::leaf(b)).value();
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 2.0 + 10.0);
  EXPECT_EQ(y[2], 3.0 + 20.0 + 100.0);
  EXPECT_EQ(y[4], 5.0 + 40.0 + 300.0);
}

TEST(Autodiff, SlicesAndShapes) {
  const auto x = test::random_tensor({3, 2, 4}, 20);
  const auto g = test::random_tensor({3}, 21);
  EXPECT_LT(check([&](const Var& v) { return ad::scale_slices(v, Var::leaf(g)); }, x), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::scale_slices(Var::leaf(x), v); }, g), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::mean_slices(v); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::reshape(v, {6, 4}); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::permute3(v, {2, 0, 1}); }, x), kTol);
  EXPECT_LT(check([](const Var& v) { return ad::permute3(v, {1, 2, 0}); }, x), kTol);
  const auto m = test::random_tensor({5, 3}, 22);
  EXPECT_LT(check([](const Var& v) { return ad::slice_rows(v, 1, 4); }, m), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::concat_rows({v, ad::affine(v, 2.0), Var::leaf(m)}); }, m),
            kTol);
}

TEST(Autodiff, PermuteLayout) {
  Tensor x({2, 3, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i);
  const auto y = ad::permute3(Var::leaf(x), {2, 0, 1}).value();
  ASSERT_EQ(y.shape(), (Shape{4, 2, 3}));
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y.at(c, a, b), x.at(a, b, c));
}

TEST(Autodiff, SelectiveScanAllInputs) {
  const std::size_t E = 3, S = 4, T = 5;
  const auto u = test::random_tensor({E, T}, 23);
  Tensor delta = test::random_tensor({E, T}, 24, 0.1);
  for (double& v : delta.data()) v = 0.2 + std::abs(v);
  Tensor a = test::random_tensor({E, S}, 25);
  for (double& v : a.data()) v = -0.3 - std::abs(v);
  const auto b = test::random_tensor({S, T}, 26), c = test::random_tensor({S, T}, 27);
  const auto d = test::random_tensor({E}, 28);
  auto L = [](const Tensor& t) { return Var::leaf(t); };
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(v, L(delta), L(a), L(b), L(c), L(d)); }, u), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(L(u), v, L(a), L(b), L(c), L(d)); }, delta), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(L(u), L(delta), v, L(b), L(c), L(d)); }, a), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(L(u), L(delta), L(a), v, L(c), L(d)); }, b), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(L(u), L(delta), L(a), L(b), v, L(d)); }, c), kTol);
  EXPECT_LT(check([&](const Var& v) { return ad::selective_scan(L(u), L(delta), L(a), L(b), L(c), v); }, d), kTol);
}

TEST(Autodiff, NoGradModeRecordsNothing) {
  const auto x = Var::leaf(test::random_tensor({3, 3}, 29));
  const auto y = ad::exp(ad::mul(x, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->inputs.empty());
}

TEST(Autodiff, GradientAccumulatesAcrossUses) {
  auto x = Var::leaf(Tensor({2}, {1.5, -2.0}), true);
  ad::sum(ad::add(ad::mul(x, x), ad::affine(x, 3.0))).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2 * 1.5 + 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 2 * -2.0 + 3.0);
}

}  // namespace
}  // namespace mcsp
