// SPDX-License-Identifier: Apache-2.0
#include "mcsp/numcore/adam.hpp"

#include <cmath>

#include "mcsp/error.hpp"

namespace mcsp {

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  if (grad.shape() != param.shape()) {
    throw InvalidArgument("adam_step: gradient shape " + shape_string(grad.shape()) +
                          " does not match parameter " + shape_string(param.shape()));
  }
  if (state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
    throw InvalidArgument("adam_step: moment buffers do not match parameter shape");
  }
  const auto& h = state.hyper;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double g = grad[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    param[i] -= h.lr * mhat / (std::sqrt(vhat) + h.eps);
  }
}

}  // namespace mcsp
