// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace mcsp {

using cplx = std::complex<double>;

/// rows x cols complex matrix stored as two row-major real planes.
class ComplexMatrix {
 public:
  ComplexMatrix() = default;
  ComplexMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), re_(rows * cols, 0.0), im_(rows * cols, 0.0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return re_.size(); }

  cplx operator()(std::size_t r, std::size_t c) const noexcept {
    return {re_[r * cols_ + c], im_[r * cols_ + c]};
  }
  void set(std::size_t r, std::size_t c, cplx v) noexcept {
    re_[r * cols_ + c] = v.real();
    im_[r * cols_ + c] = v.imag();
  }

  std::vector<double>& re() noexcept { return re_; }
  std::vector<double>& im() noexcept { return im_; }
  const std::vector<double>& re() const noexcept { return re_; }
  const std::vector<double>& im() const noexcept { return im_; }

  static ComplexMatrix identity(std::size_t n);

  ComplexMatrix conj_transpose() const;
  double frobenius_sq() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> re_;
  std::vector<double> im_;
};

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);
double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b);

/// Unitary K-point DFT: entry (m, n) = exp(-j 2 pi m n / K) / sqrt(K).
ComplexMatrix dft_matrix(std::size_t K);

}  // namespace mcsp
