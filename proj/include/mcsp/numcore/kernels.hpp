// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hot loops behind the autodiff ops. Each kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the unqualified
// entry points dispatch between them. Every OpenMP kernel partitions output
// elements across threads and keeps the per-element summation order of the
// serial kernel, so results are bitwise identical for any thread count.

#include <cstddef>

namespace mcsp::kernels {

struct ScanDims {
  std::size_t channels;  // E
  std::size_t state;     // S
  std::size_t tokens;    // T
};

/// Inputs of the selective scan. Row-major layouts:
/// u, delta: E x T; a: E x S (negative); b, c: S x T; d: E.
struct ScanInputs {
  const double* u;
  const double* delta;
  const double* a;
  const double* b;
  const double* c;
  const double* d;
};

/// Gradient outputs (accumulated into, each may be null).
struct ScanGrads {
  double* u;
  double* delta;
  double* a;
  double* b;
  double* c;
  double* d;
};

namespace serial {

// C (m x n) = A (m x k) * B (k x n); accumulate adds into C instead of
// overwriting it.
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
// C (m x n) = A^T * B with A stored k x m.
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
// C (m x n) = A * B^T with B stored n x k.
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);

// Same-padded stride-1 2-D convolution.
// x: B x Cin x H x W, w: Cout x Cin x KH x KW, bias: Cout (nullable),
// y: B x Cout x H x W.
void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw);

/// Sequential selective scan. `states` (nullable) receives h_t as E x T x S.
void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states);

/// Reverse pass of the sequential scan given stored states and dy.
void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& grads);

/// Two-pass chunked scan: per-chunk local scans from a zero state, a carry
/// pass across chunk boundaries, then a correction pass. Algebraically equal
/// to the sequential scan.
void selective_scan_chunked(const ScanInputs& in, const ScanDims& dims, std::size_t chunk,
                            double* y);

}  // namespace serial

namespace omp {

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw);
// Channels are independent recurrences; parallel over E.
void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states);
void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& grads);

}  // namespace omp

/// Enables the OpenMP kernels for large enough problems (default on).
void set_parallel(bool enabled) noexcept;
bool parallel_enabled() noexcept;

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols);
void conv2d(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t cin, std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
            std::size_t kw);
void selective_scan(const ScanInputs& in, const ScanDims& dims, double* y, double* states);
void selective_scan_backward(const ScanInputs& in, const ScanDims& dims, const double* states,
                             const double* dy, const ScanGrads& grads);

}  // namespace mcsp::kernels
