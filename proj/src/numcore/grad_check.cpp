// SPDX-License-Identifier: Apache-2.0
#include "mcsp/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mcsp/error.hpp"

namespace mcsp {

double grad_check(const std::function<ad::Var(const ad::Var&)>& f, const Tensor& x,
                  double epsilon) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4)) {
    throw InvalidArgument("grad_check: epsilon must lie in [1e-7, 1e-4]");
  }
  auto leaf = ad::Var::leaf(x, true);
  auto out = f(leaf);
  if (out.numel() != 1) throw InvalidArgument("grad_check: f must return a scalar");
  if (!std::isfinite(out.value()[0])) throw NumericFailure("grad_check: f(x) is not finite");
  out.backward();
  const Tensor analytic = leaf.grad();

  auto eval = [&](const Tensor& point) {
    auto v = f(ad::Var::leaf(point, false)).value()[0];
    if (!std::isfinite(v)) throw NumericFailure("grad_check: f(x +- eps) is not finite");
    return v;
  };

  double worst = 0.0;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + epsilon;
    const double fp = eval(probe);
    probe[i] = orig - epsilon;
    const double fm = eval(probe);
    probe[i] = orig;
    const double fd = (fp - fm) / (2.0 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

}  // namespace mcsp
