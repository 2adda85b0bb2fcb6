// SPDX-License-Identifier: Apache-2.0
#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#include "mcsp/numcore/kernels.hpp"

namespace mcsp::kernels {

namespace omp {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) serial::softmax_rows(x + r * cols, y + r * cols, 1, cols);
}

void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw) {
  const auto planes = static_cast<std::ptrdiff_t>(batch * cout);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t pl = 0; pl < planes; ++pl) {
    const std::size_t bi = static_cast<std::size_t>(pl) / cout;
    const std::size_t co = static_cast<std::size_t>(pl) % cout;
    // One output plane at a time: reuse the serial kernel on a single-output
    // slice of the weights.
    serial::conv2d(x + bi * cin * h * wd, w + co * cin * kh * kw, bias ? bias + co : nullptr,
                   y + (bi * cout + co) * h * wd, 1, cin, 1, h, wd, kh, kw);
  }
}

void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states) {
  const std::size_t T = dims.tokens, S = dims.state;
  const auto E = static_cast<std::ptrdiff_t>(dims.channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < E; ++e) {
    ScanInputs row{in.u + e * T, in.delta + e * T, in.a + e * S, in.b, in.c, in.d + e};
    serial::selective_scan(row, {1, S, T}, y + e * T, states ? states + e * T * S : nullptr);
  }
}

void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& g) {
  const std::size_t S = dims.state, T = dims.tokens;
  const auto E = static_cast<std::ptrdiff_t>(dims.channels);
  // Pass 1 (parallel over channels): per-channel gradients, plus the state
  // gradient dL/dh_t kept for the cross-channel reductions.
  std::vector<double> gh_all(dims.channels * T * S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < E; ++e) {
    std::vector<double> carry(S, 0.0);
    const double* arow = in.a + e * S;
    double dd = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      const double dt = in.delta[e * T + t];
      const double x = in.u[e * T + t];
      const double gy = dy[e * T + t];
      const double* hp = t > 0 ? states + (e * T + t - 1) * S : nullptr;
      dd += gy * x;
      double du = in.d[e] * gy;
      double ddt = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double decay = std::exp(dt * arow[s]);
        const double gh = carry[s] + in.c[s * T + t] * gy;
        gh_all[(e * T + t) * S + s] = gh;
        const double hprev = hp ? hp[s] : 0.0;
        const double ga = gh * hprev;
        ddt += ga * decay * arow[s] + gh * in.b[s * T + t] * x;
        if (g.a) g.a[e * S + s] += ga * decay * dt;
        du += gh * dt * in.b[s * T + t];
        carry[s] = gh * decay;
      }
      if (g.u) g.u[e * T + t] += du;
      if (g.delta) g.delta[e * T + t] += ddt;
    }
    if (g.d) g.d[e] += dd;
  }
  // Pass 2 (parallel over state index): reductions over channels in the
  // same channel order as the serial kernel.
  const auto S_ = static_cast<std::ptrdiff_t>(S);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t s = 0; s < S_; ++s) {
    for (std::ptrdiff_t e = 0; e < E; ++e) {
      for (std::size_t t = T; t-- > 0;) {
        const double gy = dy[e * T + t];
        const double gh = gh_all[(e * T + t) * S + s];
        if (g.c) g.c[s * T + t] += gy * states[(e * T + t) * S + s];
        if (g.b) g.b[s * T + t] += gh * in.delta[e * T + t] * in.u[e * T + t];
      }
    }
  }
}

}  // namespace omp

namespace {
std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 16;

bool use_omp(std::size_t work) {
  return g_parallel.load(std::memory_order_relaxed) && work >= kParallelWork &&
         !omp_in_parallel() && omp_get_max_threads() > 1;
}
}  // namespace

void set_parallel(bool enabled) noexcept { g_parallel.store(enabled); }
bool parallel_enabled() noexcept { return g_parallel.load(); }

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (use_omp(m * k * n)) return omp::matmul_nn(a, b, c, m, k, n, accumulate);
  serial::matmul_nn(a, b, c, m, k, n, accumulate);
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (use_omp(m * k * n)) return omp::matmul_tn(a, b, c, m, k, n, accumulate);
  serial::matmul_tn(a, b, c, m, k, n, accumulate);
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (use_omp(m * k * n)) return omp::matmul_nt(a, b, c, m, k, n, accumulate);
  serial::matmul_nt(a, b, c, m, k, n, accumulate);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols) {
  if (use_omp(rows * cols * 8)) return omp::softmax_rows(x, y, rows, cols);
  serial::softmax_rows(x, y, rows, cols);
}

void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw) {
  if (use_omp(batch * cin * cout * h * wd * kh * kw)) {
    return omp::conv2d(x, w, bias, y, batch, cin, cout, h, wd, kh, kw);
  }
  serial::conv2d(x, w, bias, y, batch, cin, cout, h, wd, kh, kw);
}

void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states) {
  if (use_omp(dims.channels * dims.state * dims.tokens * 8)) {
    return omp::selective_scan(in, dims, y, states);
  }
  serial::selective_scan(in, dims, y, states);
}

void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& grads) {
  if (use_omp(dims.channels * dims.state * dims.tokens * 8)) {
    return omp::selective_scan_backward(in, dims, states, dy, grads);
  }
  serial::selective_scan_backward(in, dims, states, dy, grads);
}

}  // namespace mcsp::kernels
