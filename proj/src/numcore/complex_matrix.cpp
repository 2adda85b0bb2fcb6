// SPDX-License-Identifier: Apache-2.0
#include "mcsp/numcore/complex_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mcsp/error.hpp"

namespace mcsp {

ComplexMatrix ComplexMatrix::identity(std::size_t n) {
  ComplexMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m.re_[i * n + i] = 1.0;
  return m;
}

ComplexMatrix ComplexMatrix::conj_transpose() const {
  ComplexMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) {
      out.re_[c * rows_ + r] = re_[r * cols_ + c];
      out.im_[c * rows_ + r] = -im_[r * cols_ + c];
    }
  }
  return out;
}

double ComplexMatrix::frobenius_sq() const noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < re_.size(); ++i) s += re_[i] * re_[i] + im_[i] * im_[i];
  return s;
}

bool ComplexMatrix::all_finite() const noexcept {
  auto fin = [](double v) { return std::isfinite(v); };
  return std::all_of(re_.begin(), re_.end(), fin) && std::all_of(im_.begin(), im_.end(), fin);
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("complex matmul: inner dimensions differ");
  }
  const std::size_t n = a.rows(), m = b.cols(), inner = a.cols();
  ComplexMatrix out(n, m);
  const auto& ar = a.re();
  const auto& ai = a.im();
  const auto& br = b.re();
  const auto& bi = b.im();
  auto& outr = out.re();
  auto& outi = out.im();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < inner; ++p) {
      const double xr = ar[i * inner + p];
      const double xi = ai[i * inner + p];
      for (std::size_t j = 0; j < m; ++j) {
        const double yr = br[p * m + j];
        const double yi = bi[p * m + j];
        outr[i * m + j] += xr * yr - xi * yi;
        outi[i * m + j] += xr * yi + xi * yr;
      }
    }
  }
  return out;
}

double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("max_abs_diff: complex shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(cplx(a.re()[i] - b.re()[i], a.im()[i] - b.im()[i])));
  }
  return m;
}

ComplexMatrix dft_matrix(std::size_t K) {
  if (K == 0) throw InvalidArgument("dft_matrix: K must be >= 1");
  ComplexMatrix f(K, K);
  const double scale = 1.0 / std::sqrt(static_cast<double>(K));
  for (std::size_t m = 0; m < K; ++m) {
    for (std::size_t n = 0; n < K; ++n) {
      // Reduce m*n mod K first so the angle stays small and exact.
      const auto idx = (m * n) % K;
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(idx) / static_cast<double>(K);
      f.set(m, n, {scale * std::cos(ang), scale * std::sin(ang)});
    }
  }
  return f;
}

}  // namespace mcsp
