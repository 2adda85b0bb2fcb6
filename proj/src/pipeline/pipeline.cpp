// SPDX-License-Identifier: Apache-2.0
#include "mcsp/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "mcsp/error.hpp"

namespace mcsp::pipeline {

namespace {
Tensor stack_re_im(const ComplexMatrix& h) {
  const std::size_t K = h.rows(), P = h.cols();
  Tensor x({2, K, P});
  std::copy(h.re().begin(), h.re().end(), x.ptr());
  std::copy(h.im().begin(), h.im().end(), x.ptr() + K * P);
  return x;
}
}  // namespace

std::pair<Tensor, Tensor> to_freq_delay(const ComplexMatrix& h_f) {
  if (h_f.rows() == 0 || h_f.cols() == 0) throw InvalidArgument("to_freq_delay: empty grid");
  if (!h_f.all_finite()) throw NumericFailure("to_freq_delay: non-finite CSI");
  const auto f_h = dft_matrix(h_f.rows()).conj_transpose();
  return {stack_re_im(h_f), stack_re_im(matmul(f_h, h_f))};
}

std::pair<Tensor, NormStats> normalize(const Tensor& x) {
  const auto n = static_cast<double>(x.numel());
  double mu = 0.0;
  for (double v : x.data()) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : x.data()) var += (v - mu) * (v - mu);
  const double sigma = std::max(std::sqrt(var / n), kSigmaFloor);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = (x[i] - mu) / sigma;
  return {std::move(y), NormStats{mu, sigma}};
}

Tensor denormalize(const Tensor& x, const NormStats& stats) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] * stats.sigma + stats.mu;
  return y;
}

std::size_t patch_count(std::size_t P, std::size_t N) { return (P + N - 1) / N; }

Tensor patchify(const Tensor& x, std::size_t N) {
  if (x.rank() != 2) throw InvalidArgument("patchify: expected [rows x P]");
  const std::size_t R = x.dim(0), P = x.dim(1);
  if (N == 0 || N > P) {
    throw InvalidArgument("patchify: patch size " + std::to_string(N) + " invalid for P = " +
                          std::to_string(P));
  }
  const std::size_t Pp = patch_count(P, N);
  Tensor y({R, N, Pp});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < Pp; ++p) {
        const std::size_t s = p * N + n;
        y.at(r, n, p) = s < P ? x.at(r, s) : 0.0;
      }
  return y;
}

Tensor unpatchify(const Tensor& x, std::size_t P) {
  if (x.rank() != 3) throw InvalidArgument("unpatchify: expected [rows x N x P']");
  const std::size_t R = x.dim(0), N = x.dim(1), Pp = x.dim(2);
  if (P > N * Pp) throw InvalidArgument("unpatchify: P exceeds patch capacity");
  Tensor y({R, P});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t s = 0; s < P; ++s) y.at(r, s) = x.at(r, s % N, s / N);
  return y;
}

PatchedInput preprocess(const ComplexMatrix& h_f, std::size_t patch_size) {
  auto [x_f, x_tau] = to_freq_delay(h_f);
  auto [nf, stats_f] = normalize(x_f);
  auto [nt, stats_t] = normalize(x_tau);
  const std::size_t K = h_f.rows(), P = h_f.cols();
  PatchedInput out;
  out.x_f_p = patchify(std::move(nf).reshaped({2 * K, P}), patch_size);
  out.x_tau_p = patchify(std::move(nt).reshaped({2 * K, P}), patch_size);
  out.norm_f = stats_f;
  out.norm_tau = stats_t;
  out.patch_size = patch_size;
  out.patch_count = patch_count(P, patch_size);
  return out;
}

ComplexMatrix finalize_prediction(const Tensor& x_hat, const NormStats& stats) {
  if (x_hat.rank() != 2 || x_hat.dim(0) % 2 != 0) {
    throw InvalidArgument("finalize_prediction: expected [2K x L], got " +
                          shape_string(x_hat.shape()));
  }
  const std::size_t K = x_hat.dim(0) / 2, L = x_hat.dim(1);
  ComplexMatrix h(K, L);
  for (std::size_t i = 0; i < K * L; ++i) {
    h.re()[i] = x_hat[i] * stats.sigma + stats.mu;
    h.im()[i] = x_hat[K * L + i] * stats.sigma + stats.mu;
  }
  return h;
}

Tensor grid_to_rows(const ComplexMatrix& h) {
  return stack_re_im(h).reshaped({2 * h.rows(), h.cols()});
}

}  // namespace mcsp::pipeline
