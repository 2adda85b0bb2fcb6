// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "mcsp/error.hpp"
#include "mcsp/numcore/adam.hpp"
#include "mcsp/numcore/alloc.hpp"
#include "mcsp/numcore/complex_matrix.hpp"
#include "mcsp/numcore/rng.hpp"
#include "mcsp/numcore/tensor.hpp"
#include "support.hpp"

namespace mcsp {
namespace {

double unitarity_error(std::size_t K) {
  const auto F = dft_matrix(K);
  return max_abs_diff(matmul(F, F.conj_transpose()), ComplexMatrix::identity(K));
}

TEST(Dft, SizeOneIsIdentity) {
  const auto F = dft_matrix(1);
  EXPECT_EQ(F(0, 0), cplx(1.0, 0.0));
}

TEST(Dft, SizeTwoIsHadamard) {
  const auto F = dft_matrix(2);
  const double s = 1.0 / std::sqrt(2.0);
  EXPECT_NEAR(std::abs(F(0, 0) - cplx(s, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(F(0, 1) - cplx(s, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(F(1, 0) - cplx(s, 0)), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(F(1, 1) - cplx(-s, 0)), 0.0, 1e-15);
}

TEST(Dft, Unitary) {
  for (std::size_t K : {1, 2, 4, 8, 48}) EXPECT_LT(unitarity_error(K), 1e-12) << "K=" << K;
}

TEST(Dft, ZeroSizeRejected) { EXPECT_THROW(dft_matrix(0), InvalidArgument); }

TEST(Dft, RoundTrip) {
  const auto H = test::random_grid(48, 16, 3);
  const auto F = dft_matrix(48);
  EXPECT_LT(max_abs_diff(matmul(F.conj_transpose(), matmul(F, H)), H), 1e-10);
}

TEST(Tensor, ShapeInvariant) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), InvalidArgument);
  EXPECT_THROW(t.reshaped({5, 5}), InvalidArgument);
}

TEST(Rng, PhiloxKnownAnswer) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Rng, StreamsAreIndependentOfInterleaving) {
  RngStream a(7, 1), b(7, 2);
  std::vector<double> interleaved;
  for (int i = 0; i < 100; ++i) {
    interleaved.push_back(a.normal());
    b.uniform();
  }
  RngStream a2(7, 1);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(interleaved[i], a2.normal());
}

TEST(Rng, DifferentStreamsDiffer) {
  RngStream a(7, 1), b(7, 2);
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformRangeAndMoments) {
  RngStream r(1, 0);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Rng, PermutationIsBijection) {
  RngStream r(3, 4);
  auto p = r.permutation(100);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(p[i], i);
}

TEST(Adam, FirstStepClosedForm) {
  Tensor p({1}, 0.5), g({1}, 1.0);
  AdamState st(p.shape(), AdamHyper{});
  adam_step(p, g, st);
  EXPECT_NEAR(p[0] - 0.5, -1e-3 * 1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p[0] - 0.5, -1e-3, 1e-8);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParam) {
  Tensor p({3}, {1.0, -2.0, 3.0}), g({3}, 0.0);
  AdamState st(p.shape(), AdamHyper{});
  adam_step(p, g, st);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(p[2], 3.0);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, TwoUnitSteps) {
  Tensor p({1}, 0.0), g({1}, 1.0);
  AdamState st(p.shape(), AdamHyper{});
  adam_step(p, g, st);
  const double d1 = p[0];
  adam_step(p, g, st);
  const double d2 = p[0] - d1;
  EXPECT_NEAR(d1, -1e-3, 1e-8);
  EXPECT_NEAR(d2, -1e-3, 1e-8);
}

TEST(Adam, FirstStepOpposesGradientSign) {
  for (double gv : {-5.0, -1e-6, 1e-6, 3.0}) {
    Tensor p({1}, 0.0), g({1}, gv);
    AdamState st(p.shape(), AdamHyper{});
    adam_step(p, g, st);
    EXPECT_EQ(std::signbit(p[0]), !std::signbit(gv));
  }
}

TEST(Adam, ShapeMismatchRejected) {
  Tensor p({2}), g({3});
  AdamState st(p.shape(), AdamHyper{});
  EXPECT_THROW(adam_step(p, g, st), InvalidArgument);
}

TEST(Alloc, SingleTensorPeak) {
  const auto peak = with_alloc_tracking([] { Tensor t({1000}); });
  EXPECT_GE(peak, 8000);
}

TEST(Alloc, EmptyWorkIsZero) { EXPECT_EQ(with_alloc_tracking([] {}), 0); }

TEST(Alloc, SequentialLifetimesDoNotAdd) {
  const auto one = with_alloc_tracking([] { Tensor t({1000}); });
  const auto two = with_alloc_tracking([] {
    { Tensor a({1000}); }
    { Tensor b({1000}); }
  });
  EXPECT_EQ(one, two);
  const auto both = with_alloc_tracking([] {
    Tensor a({1000});
    Tensor b({1000});
  });
  EXPECT_EQ(both, 2 * one);
}

TEST(Alloc, ReturnsResult) {
  auto [v, peak] = with_alloc_tracking([] {
    Tensor t({10}, 2.0);
    return t[3];
  });
  EXPECT_EQ(v, 2.0);
  EXPECT_GE(peak, 80);
}

TEST(Alloc, NestingRejected) {
  EXPECT_THROW(with_alloc_tracking([] { with_alloc_tracking([] {}); }), UsageError);
}

TEST(Alloc, PeakAtLeastCurrent) {
  with_alloc_tracking([] {
    Tensor a({100});
    const auto c = current_alloc_counter();
    EXPECT_GE(c.peak_bytes, c.current_bytes);
    EXPECT_GE(c.current_bytes, 0);
  });
}

}  // namespace
}  // namespace mcsp
