// SPDX-License-Identifier: Apache-2.0
#include "mcsp/chansim/observation.hpp"

#include <cmath>

#include "mcsp/error.hpp"

namespace mcsp::chansim {

std::vector<std::uint8_t> pilot_mask(std::size_t K, std::size_t P, const DmrsPattern& pattern) {
  if (pattern.slot_stride == 0 || pattern.rb_stride == 0) {
    throw InvalidArgument("DMRS strides must be >= 1");
  }
  std::vector<std::uint8_t> mask(K * P, 0);
  for (std::size_t k = 0; k < K; k += pattern.rb_stride)
    for (std::size_t s = 0; s < P; s += pattern.slot_stride) mask[k * P + s] = 1;
  return mask;
}

Observation apply_dmrs_observation(const ComplexGrid& csi, const DmrsPattern& pattern,
                                   RngStream& rng) {
  const std::size_t K = csi.rows(), P = csi.cols();
  Observation obs{ComplexGrid(K, P), pilot_mask(K, P, pattern)};
  double power = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < K * P; ++i) {
    if (!obs.mask[i]) continue;
    power += csi.re()[i] * csi.re()[i] + csi.im()[i] * csi.im()[i];
    ++n;
  }
  if (n == 0) throw InvalidArgument("apply_dmrs_observation: pattern selects no pilots");
  const double noise_var =
      pattern.noiseless() ? 0.0 : (power / static_cast<double>(n)) / std::pow(10.0, pattern.snr_db / 10.0);
  for (std::size_t i = 0; i < K * P; ++i) {
    if (!obs.mask[i]) continue;
    cplx v{csi.re()[i], csi.im()[i]};
    if (noise_var > 0.0) v += rng.complex_normal(noise_var);
    obs.grid.re()[i] = v.real();
    obs.grid.im()[i] = v.imag();
  }
  return obs;
}

namespace {

// Fills the unknown entries of a strided line from the known ones.
void fill_line(double* re, double* im, const std::uint8_t* known, std::size_t known_stride,
               std::size_t n, std::size_t stride) {
  std::ptrdiff_t prev = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!known[i * known_stride]) continue;
    const auto cur = static_cast<std::ptrdiff_t>(i);
    if (prev < 0) {
      for (std::ptrdiff_t j = 0; j < cur; ++j) {
        re[j * stride] = re[i * stride];
        im[j * stride] = im[i * stride];
      }
    } else {
      const double span = static_cast<double>(cur - prev);
      for (std::ptrdiff_t j = prev + 1; j < cur; ++j) {
        const double w = static_cast<double>(j - prev) / span;
        re[j * stride] = (1.0 - w) * re[prev * stride] + w * re[cur * stride];
        im[j * stride] = (1.0 - w) * im[prev * stride] + w * im[cur * stride];
      }
    }
    prev = cur;
  }
  for (auto j = static_cast<std::size_t>(prev + 1); j < n; ++j) {
    re[j * stride] = re[prev * stride];
    im[j * stride] = im[prev * stride];
  }
}

}  // namespace

ComplexGrid interpolate_pilots(const Observation& obs) {
  const std::size_t K = obs.grid.rows(), P = obs.grid.cols();
  if (obs.mask.size() != K * P) throw InvalidArgument("interpolate_pilots: mask size mismatch");
  ComplexGrid out = obs.grid;
  std::vector<std::uint8_t> row_known(K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t s = 0; s < P; ++s) row_known[k] |= obs.mask[k * P + s];
  }
  bool any = false;
  for (auto r : row_known) any = any || r;
  if (!any) throw InvalidArgument("interpolate_pilots: empty pilot mask");

  for (std::size_t k = 0; k < K; ++k) {
    if (!row_known[k]) continue;
    fill_line(out.re().data() + k * P, out.im().data() + k * P, obs.mask.data() + k * P, 1, P, 1);
  }
  for (std::size_t s = 0; s < P; ++s) {
    fill_line(out.re().data() + s, out.im().data() + s, row_known.data(), 1, K, P);
  }
  return out;
}

}  // namespace mcsp::chansim
