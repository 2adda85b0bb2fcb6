// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <vector>

#include "mcsp/numcore/kernels.hpp"
#include "support.hpp"

namespace mcsp {
namespace {

using Vec = std::vector<double>;

Vec random_vec(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RngStream r(seed, stream_id("kernels"));
  Vec v(n);
  for (double& x : v) x = r.uniform(lo, hi);
  return v;
}

struct ThreadCount {
  int prev = omp_get_max_threads();
  explicit ThreadCount(int n) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(prev); }
};

struct ScanCase {
  kernels::ScanDims dims;
  Vec u, delta, a, b, c, d;
  kernels::ScanInputs in() const {
    return {u.data(), delta.data(), a.data(), b.data(), c.data(), d.data()};
  }
};

ScanCase make_scan(std::size_t E, std::size_t S, std::size_t T, std::uint64_t seed) {
  ScanCase s{{E, S, T}, {}, {}, {}, {}, {}, {}};
  s.u = random_vec(E * T, seed);
  s.delta = random_vec(E * T, seed + 1, 0.01, 0.5);
  s.a = random_vec(E * S, seed + 2, -2.0, -0.1);
  s.b = random_vec(S * T, seed + 3);
  s.c = random_vec(S * T, seed + 4);
  s.d = random_vec(E, seed + 5);
  return s;
}

// Literal recurrence used as the oracle.
Vec naive_scan(const ScanCase& s) {
  const auto [E, S, T] = s.dims;
  Vec y(E * T, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    Vec h(S, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double dt = s.delta[e * T + t], ut = s.u[e * T + t];
      double acc = 0.0;
      for (std::size_t k = 0; k < S; ++k) {
        h[k] = std::exp(dt * s.a[e * S + k]) * h[k] + dt * s.b[k * T + t] * ut;
        acc += s.c[k * T + t] * h[k];
      }
      y[e * T + t] = acc + s.d[e] * ut;
    }
  }
  return y;
}

double max_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(Kernels, MatmulVariantsAgreeWithNaive) {
  const std::size_t m = 7, k = 5, n = 9;
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  Vec ref(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) ref[i * n + j] += a[i * k + p] * b[p * n + j];
  Vec c(m * n);
  kernels::serial::matmul_nn(a.data(), b.data(), c.data(), m, k, n, false);
  EXPECT_LT(max_diff(c, ref), 1e-12);

  Vec at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  kernels::serial::matmul_tn(at.data(), b.data(), c.data(), m, k, n, false);
  EXPECT_LT(max_diff(c, ref), 1e-12);
  kernels::serial::matmul_nt(a.data(), bt.data(), c.data(), m, k, n, false);
  EXPECT_LT(max_diff(c, ref), 1e-12);
}

TEST(Kernels, OmpMatchesSerialBitwise) {
  ThreadCount threads(4);
  const std::size_t m = 64, k = 96, n = 80;
  const auto a = random_vec(m * k, 3), b = random_vec(k * n, 4), bt = random_vec(n * k, 5);
  const auto at = random_vec(k * m, 6);
  Vec c1(m * n, 0.5), c2(m * n, 0.5);
  kernels::serial::matmul_nn(a.data(), b.data(), c1.data(), m, k, n, true);
  kernels::omp::matmul_nn(a.data(), b.data(), c2.data(), m, k, n, true);
  EXPECT_EQ(c1, c2);
  kernels::serial::matmul_tn(at.data(), b.data(), c1.data(), m, k, n, false);
  kernels::omp::matmul_tn(at.data(), b.data(), c2.data(), m, k, n, false);
  EXPECT_EQ(c1, c2);
  kernels::serial::matmul_nt(a.data(), bt.data(), c1.data(), m, k, n, false);
  kernels::omp::matmul_nt(a.data(), bt.data(), c2.data(), m, k, n, false);
  EXPECT_EQ(c1, c2);

  const auto x = random_vec(33 * 57, 7, -20, 20);
  Vec s1(x.size()), s2(x.size());
  kernels::serial::softmax_rows(x.data(), s1.data(), 33, 57);
  kernels::omp::softmax_rows(x.data(), s2.data(), 33, 57);
  EXPECT_EQ(s1, s2);

  const auto img = random_vec(3 * 2 * 12 * 10, 8), w = random_vec(4 * 2 * 3 * 3, 9);
  const auto bias = random_vec(4, 10);
  Vec y1(3 * 4 * 12 * 10), y2(y1.size());
  kernels::serial::conv2d(img.data(), w.data(), bias.data(), y1.data(), 3, 2, 4, 12, 10, 3, 3);
  kernels::omp::conv2d(img.data(), w.data(), bias.data(), y2.data(), 3, 2, 4, 12, 10, 3, 3);
  EXPECT_EQ(y1, y2);
}

TEST(Kernels, SoftmaxRowsSumToOne) {
  const auto x = random_vec(20 * 31, 11, -50, 50);
  Vec y(x.size());
  kernels::serial::softmax_rows(x.data(), y.data(), 20, 31);
  for (std::size_t r = 0; r < 20; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 31; ++c) s += y[r * 31 + c];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Kernels, ConvMatchesNaive) {
  const std::size_t B = 2, Ci = 2, Co = 3, H = 5, W = 6, KH = 3, KW = 3;
  const auto x = random_vec(B * Ci * H * W, 12), w = random_vec(Co * Ci * KH * KW, 13);
  const auto bias = random_vec(Co, 14);
  Vec y(B * Co * H * W);
  kernels::serial::conv2d(x.data(), w.data(), bias.data(), y.data(), B, Ci, Co, H, W, KH, KW);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Co; ++o)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
          double acc = bias[o];
          for (std::size_t c = 0; c < Ci; ++c)
            for (std::size_t p = 0; p < KH; ++p)
              for (std::size_t q = 0; q < KW; ++q) {
                const long ii = long(i) + long(p) - 1, jj = long(j) + long(q) - 1;
                if (ii < 0 || jj < 0 || ii >= long(H) || jj >= long(W)) continue;
                acc += w[((o * Ci + c) * KH + p) * KW + q] * x[((b * Ci + c) * H + ii) * W + jj];
              }
          EXPECT_NEAR(y[((b * Co + o) * H + i) * W + j], acc, 1e-12);
        }
}

TEST(Kernels, ScanMatchesLiteralRecurrence) {
  const auto s = make_scan(6, 4, 11, 20);
  Vec y(6 * 11);
  kernels::serial::selective_scan(s.in(), s.dims, y.data(), nullptr);
  EXPECT_LT(max_diff(y, naive_scan(s)), 1e-14);
}

TEST(Kernels, ChunkedScanEqualsSequential) {
  for (std::size_t chunk : {1, 2, 3, 4, 8, 64}) {
    const auto s = make_scan(5, 16, 8, 30);
    Vec y1(5 * 8), y2(5 * 8);
    kernels::serial::selective_scan(s.in(), s.dims, y1.data(), nullptr);
    kernels::serial::selective_scan_chunked(s.in(), s.dims, chunk, y2.data());
    EXPECT_LT(max_diff(y1, y2), 1e-12) << "chunk " << chunk;
  }
  const auto s = make_scan(4, 16, 50, 31);
  Vec y1(4 * 50), y2(4 * 50);
  kernels::serial::selective_scan(s.in(), s.dims, y1.data(), nullptr);
  kernels::serial::selective_scan_chunked(s.in(), s.dims, 7, y2.data());
  EXPECT_LT(max_diff(y1, y2), 1e-12);
}

TEST(Kernels, ScanOmpMatchesSerialBitwise) {
  ThreadCount threads(4);
  const auto s = make_scan(32, 16, 40, 40);
  const std::size_t E = 32, S = 16, T = 40;
  Vec y1(E * T), y2(E * T), st1(E * T * S), st2(E * T * S);
  kernels::serial::selective_scan(s.in(), s.dims, y1.data(), st1.data());
  kernels::omp::selective_scan(s.in(), s.dims, y2.data(), st2.data());
  EXPECT_EQ(y1, y2);
  EXPECT_EQ(st1, st2);

  const auto dy = random_vec(E * T, 41);
  auto grads = [&](auto fn) {
    std::vector<Vec> g{Vec(E * T), Vec(E * T), Vec(E * S), Vec(S * T), Vec(S * T), Vec(E)};
    kernels::ScanGrads sg{g[0].data(), g[1].data(), g[2].data(), g[3].data(), g[4].data(),
                          g[5].data()};
    fn(s.in(), s.dims, st1.data(), dy.data(), sg);
    return g;
  };
  const auto g1 = grads(kernels::serial::selective_scan_backward);
  const auto g2 = grads(kernels::omp::selective_scan_backward);
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_EQ(g1[i], g2[i]) << "grad " << i;
}

TEST(Kernels, DispatchIndependentOfParallelSwitch) {
  ThreadCount threads(4);
  const std::size_t m = 128, k = 128, n = 128;
  const auto a = random_vec(m * k, 50), b = random_vec(k * n, 51);
  Vec c1(m * n), c2(m * n);
  const bool prev = kernels::parallel_enabled();
  kernels::set_parallel(true);
  kernels::matmul_nn(a.data(), b.data(), c1.data(), m, k, n, false);
  kernels::set_parallel(false);
  kernels::matmul_nn(a.data(), b.data(), c2.data(), m, k, n, false);
  kernels::set_parallel(prev);
  EXPECT_EQ(c1, c2);
}

}  // namespace
}  // namespace mcsp
