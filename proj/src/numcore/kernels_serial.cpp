// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <vector>

#include "mcsp/numcore/kernels.hpp"

namespace mcsp::kernels::serial {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    const double mx = *std::max_element(xr, xr + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

namespace {

void conv2d_plane(const double* x, const double* w, const double* bias, double* y,
                  std::size_t cin, std::size_t co, std::size_t h, std::size_t wd, std::size_t kh,
                  std::size_t kw) {
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(wd);
  std::fill(y, y + h * wd, bias ? bias[co] : 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* xp = x + ci * h * wd;
    for (std::size_t di = 0; di < kh; ++di) {
      for (std::size_t dj = 0; dj < kw; ++dj) {
        const double wv = w[((co * cin + ci) * kh + di) * kw + dj];
        const std::ptrdiff_t oi = static_cast<std::ptrdiff_t>(di) - ph;
        const std::ptrdiff_t oj = static_cast<std::ptrdiff_t>(dj) - pw;
        const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -oi);
        const std::ptrdiff_t i1 = std::min<std::ptrdiff_t>(H, H - oi);
        const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -oj);
        const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(W, W - oj);
        for (std::ptrdiff_t i = i0; i < i1; ++i) {
          double* yr = y + i * W;
          const double* xr = xp + (i + oi) * W + oj;
          for (std::ptrdiff_t j = j0; j < j1; ++j) yr[j] += wv * xr[j];
        }
      }
    }
  }
}

}  // namespace

void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw) {
  for (std::size_t bi = 0; bi < batch; ++bi) {
    for (std::size_t co = 0; co < cout; ++co) {
      conv2d_plane(x + bi * cin * h * wd, w, bias, y + (bi * cout + co) * h * wd, cin, co, h, wd,
                   kh, kw);
    }
  }
}

void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states) {
  const std::size_t E = dims.channels, S = dims.state, T = dims.tokens;
  std::vector<double> h(S);
  for (std::size_t e = 0; e < E; ++e) {
    std::fill(h.begin(), h.end(), 0.0);
    const double* arow = in.a + e * S;
    for (std::size_t t = 0; t < T; ++t) {
      const double dt = in.delta[e * T + t];
      const double x = in.u[e * T + t];
      double acc = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        h[s] = std::exp(dt * arow[s]) * h[s] + dt * in.b[s * T + t] * x;
        acc += in.c[s * T + t] * h[s];
      }
      if (states) std::copy(h.begin(), h.end(), states + (e * T + t) * S);
      y[e * T + t] = acc + in.d[e] * x;
    }
  }
}

void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& g) {
  const std::size_t E = dims.channels, S = dims.state, T = dims.tokens;
  std::vector<double> carry(S);
  for (std::size_t e = 0; e < E; ++e) {
    std::fill(carry.begin(), carry.end(), 0.0);
    const double* arow = in.a + e * S;
    double dd = 0.0;
    for (std::size_t t = T; t-- > 0;) {
      const double dt = in.delta[e * T + t];
      const double x = in.u[e * T + t];
      const double gy = dy[e * T + t];
      const double* ht = states + (e * T + t) * S;
      const double* hp = t > 0 ? states + (e * T + t - 1) * S : nullptr;
      dd += gy * x;
      double du = in.d[e] * gy;
      double ddt = 0.0;
      for (std::size_t s = 0; s < S; ++s) {
        const double decay = std::exp(dt * arow[s]);
        const double gh = carry[s] + in.c[s * T + t] * gy;
        if (g.c) g.c[s * T + t] += gy * ht[s];
        const double hprev = hp ? hp[s] : 0.0;
        const double ga = gh * hprev;
        ddt += ga * decay * arow[s] + gh * in.b[s * T + t] * x;
        if (g.a) g.a[e * S + s] += ga * decay * dt;
        if (g.b) g.b[s * T + t] += gh * dt * x;
        du += gh * dt * in.b[s * T + t];
        carry[s] = gh * decay;
      }
      if (g.u) g.u[e * T + t] += du;
      if (g.delta) g.delta[e * T + t] += ddt;
    }
    if (g.d) g.d[e] += dd;
  }
}

void selective_scan_chunked(const ScanInputs& in, const ScanDims& dims, std::size_t chunk,
                            double* y) {
  const std::size_t E = dims.channels, S = dims.state, T = dims.tokens;
  if (chunk == 0) chunk = T;
  const std::size_t n_chunks = (T + chunk - 1) / chunk;
  // Pass 1: each chunk from a zero state; keep its end state and the
  // cumulative decay across the whole chunk.
  std::vector<double> end_state(n_chunks * E * S, 0.0);
  std::vector<double> chunk_decay(n_chunks * E * S, 1.0);
  for (std::size_t ck = 0; ck < n_chunks; ++ck) {
    const std::size_t t0 = ck * chunk, t1 = std::min(T, t0 + chunk);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t s = 0; s < S; ++s) {
        const double av = in.a[e * S + s];
        double h = 0.0, prod = 1.0;
        for (std::size_t t = t0; t < t1; ++t) {
          const double dt = in.delta[e * T + t];
          const double decay = std::exp(dt * av);
          h = decay * h + dt * in.b[s * T + t] * in.u[e * T + t];
          prod *= decay;
        }
        end_state[(ck * E + e) * S + s] = h;
        chunk_decay[(ck * E + e) * S + s] = prod;
      }
    }
  }
  // Carry pass: true state entering each chunk.
  std::vector<double> carry_in(n_chunks * E * S, 0.0);
  for (std::size_t ck = 1; ck < n_chunks; ++ck) {
    for (std::size_t i = 0; i < E * S; ++i) {
      carry_in[ck * E * S + i] = chunk_decay[(ck - 1) * E * S + i] * carry_in[(ck - 1) * E * S + i] +
                                 end_state[(ck - 1) * E * S + i];
    }
  }
  // Pass 2: local scan plus decayed carry.
  std::fill(y, y + E * T, 0.0);
  for (std::size_t ck = 0; ck < n_chunks; ++ck) {
    const std::size_t t0 = ck * chunk, t1 = std::min(T, t0 + chunk);
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t s = 0; s < S; ++s) {
        const double av = in.a[e * S + s];
        const double carry = carry_in[(ck * E + e) * S + s];
        double local = 0.0, prod = 1.0;
        for (std::size_t t = t0; t < t1; ++t) {
          const double dt = in.delta[e * T + t];
          const double decay = std::exp(dt * av);
          local = decay * local + dt * in.b[s * T + t] * in.u[e * T + t];
          prod *= decay;
          y[e * T + t] += in.c[s * T + t] * (local + prod * carry);
        }
      }
      for (std::size_t t = t0; t < t1; ++t) y[e * T + t] += in.d[e] * in.u[e * T + t];
    }
  }
}

}  // namespace mcsp::kernels::serial
