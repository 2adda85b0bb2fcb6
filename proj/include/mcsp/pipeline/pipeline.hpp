// SPDX-License-Identifier: Apache-2.0
#pragma once

// Conversion between complex CSI grids and the real tensors consumed by the
// model: frequency/delay split, scalar normalisation, temporal patching, and
// the inverse path from a predicted tensor back to a complex grid.

#include <cstddef>
#include <utility>

#include "mcsp/numcore/complex_matrix.hpp"
#include "mcsp/numcore/tensor.hpp"

namespace mcsp::pipeline {

inline constexpr double kSigmaFloor = 1e-8;

struct NormStats {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Patched frequency and delay tensors, both [2K x N x P'].
struct PatchedInput {
  Tensor x_f_p;
  Tensor x_tau_p;
  NormStats norm_f;
  NormStats norm_tau;
  std::size_t patch_size = 0;
  std::size_t patch_count = 0;
};

/// X_f stacks (re, im) of H_f; X_tau stacks (re, im) of F_K^H H_f with the
/// unitary DFT. Both shaped [2 x K x P]. Throws NumericFailure on non-finite
/// input.
std::pair<Tensor, Tensor> to_freq_delay(const ComplexMatrix& h_f);

/// (X - mu) / sigma with scalar mu and population sigma over all elements;
/// sigma is floored at kSigmaFloor.
std::pair<Tensor, NormStats> normalize(const Tensor& x);
Tensor denormalize(const Tensor& x, const NormStats& stats);

std::size_t patch_count(std::size_t P, std::size_t N);

/// [R x P] -> [R x N x ceil(P/N)]; patch p holds slots p*N .. p*N+N-1, the
/// last patch zero-padded. Throws InvalidArgument if N == 0 or N > P.
Tensor patchify(const Tensor& x, std::size_t N);
/// Inverse of patchify, dropping padding: [R x N x P'] -> [R x P].
Tensor unpatchify(const Tensor& x, std::size_t P);

/// Full preprocessing of one K x P history grid.
PatchedInput preprocess(const ComplexMatrix& h_f, std::size_t patch_size);

/// [2K x L] prediction -> K x L complex grid: sigma * X + mu, first K rows
/// real part, last K rows imaginary part.
ComplexMatrix finalize_prediction(const Tensor& x_hat, const NormStats& stats);

/// Inverse of finalize_prediction for a target grid (used for oracles).
Tensor grid_to_rows(const ComplexMatrix& h);

}  // namespace mcsp::pipeline
