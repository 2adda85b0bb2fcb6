// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "mcsp/chansim/channel.hpp"

namespace mcsp::chansim {

/// Pilot lattice: slots 0, slot_stride, 2*slot_stride, ... and RBs 0,
/// rb_stride, ... (0-based) carry pilots.
struct DmrsPattern {
  std::size_t slot_stride = 2;
  std::size_t rb_stride = 1;
  double snr_db = 20.0;  // +inf disables noise

  bool noiseless() const noexcept { return snr_db == std::numeric_limits<double>::infinity(); }
};

struct Observation {
  ComplexGrid grid;                 // h + n at pilots, 0 elsewhere
  std::vector<std::uint8_t> mask;   // 1 at pilots, row-major K x P

  bool is_pilot(std::size_t k, std::size_t s) const noexcept {
    return mask[k * grid.cols() + s] != 0;
  }
};

std::vector<std::uint8_t> pilot_mask(std::size_t K, std::size_t P, const DmrsPattern& pattern);

/// Keeps the pilot positions of `csi` and adds CN(0, sigma^2) noise with
/// sigma^2 = mean pilot power / 10^(snr_db / 10).
Observation apply_dmrs_observation(const ComplexGrid& csi, const DmrsPattern& pattern,
                                   RngStream& rng);

/// Fills non-pilot entries: per RB, linear interpolation along slots between
/// pilots (real and imaginary parts separately) and nearest-pilot hold at the
/// edges. RB rows without any pilot are then filled the same way along the
/// RB axis.
ComplexGrid interpolate_pilots(const Observation& obs);

}  // namespace mcsp::chansim
