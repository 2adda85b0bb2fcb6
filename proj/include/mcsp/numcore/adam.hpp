// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "mcsp/numcore/tensor.hpp"

namespace mcsp {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  AdamHyper hyper;

  AdamState() = default;
  AdamState(const Shape& shape, AdamHyper h) : m(shape), v(shape), hyper(h) {}
};

/// One bias-corrected Adam update of `param` in place. The step counter is
/// incremented before bias correction.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

}  // namespace mcsp
