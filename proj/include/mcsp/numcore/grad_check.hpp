// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "mcsp/numcore/autodiff.hpp"

namespace mcsp {

/// Compares the autodiff gradient of a scalar function against central
/// differences. Returns max_i |g_ad - g_fd| / max(1, |g_fd|).
///
/// `f` receives a leaf Var holding the (possibly perturbed) point and must
/// return a single-element Var. Throws NumericFailure if f(x) is not finite,
/// InvalidArgument if epsilon is outside [1e-7, 1e-4].
double grad_check(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x,
                  double epsilon = 1e-5);

}  // namespace mcsp
