// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parametric multipath MISO-OFDM channel: a sum of L_p plane-wave paths,
// each with a complex gain, a delay, departure angles seen by a uniform
// planar array, and a Doppler shift.

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "mcsp/numcore/complex_matrix.hpp"
#include "mcsp/numcore/rng.hpp"

namespace mcsp::chansim {

/// K x T grid of complex channel coefficients (resource blocks x slots).
using ComplexGrid = ComplexMatrix;

inline constexpr double kSpeedOfLight = 3e8;

enum class Duplex { TDD, FDD };
enum class Band { UL, DL };

std::string to_string(Duplex d);
Duplex parse_duplex(const std::string& s);

struct OfdmNumerology {
  double f_c = 2.4e9;
  double delta_f = 15e3;
  std::size_t n_sc_per_rb = 12;
  std::size_t K_ul = 48;
  std::size_t K_dl = 48;
  double T_slot = 1e-3;
  Duplex duplex = Duplex::TDD;

  double rb_bandwidth() const noexcept { return static_cast<double>(n_sc_per_rb) * delta_f; }
  double band_bandwidth(Band b) const noexcept {
    return static_cast<double>(b == Band::UL ? K_ul : K_dl) * rb_bandwidth();
  }
  std::size_t rb_count(Band b) const noexcept { return b == Band::UL ? K_ul : K_dl; }
  /// Centre frequency (Hz) of RB k (0-based). The UL band is centred on f_c;
  /// in FDD the DL band sits directly above it, in TDD it coincides.
  double rb_frequency(Band b, std::size_t k) const noexcept;
};

struct ArrayGeometry {
  std::size_t n_h = 2;
  std::size_t n_v = 2;
  double spacing = 0.5;  // wavelengths

  std::size_t n_t() const noexcept { return n_h * n_v; }
};

/// Array response; element index m * n_v + n carries
/// exp(j * pi * spacing * 2 * (m sin(theta) cos(phi) + n sin(phi))).
std::vector<cplx> upa_steering(double theta, double phi, const ArrayGeometry& geom);

struct Path {
  cplx alpha;
  double tau = 0.0;    // s
  double theta = 0.0;  // azimuth of departure, rad
  double phi = 0.0;    // elevation of departure, rad
  double f_doppler = 0.0;  // Hz
};

using PathSet = std::vector<Path>;

/// Statistics of the path sampler.
struct PathModel {
  double max_delay = 2.5e-6;
  double delay_decay = 1e-6;  // exponential power-delay profile constant
  double azimuth_half_width = 1.0471975511965976;    // pi/3 (120 deg sector)
  double elevation_half_width = 0.2617993877991494;  // pi/12
};

/// Maximum Doppler shift (Hz) for a velocity in km/h.
double max_doppler(double velocity_kmh, double f_c) noexcept;

/// Draws L_p paths: gains CN(0, p_l) with p_l an exponential power-delay
/// profile normalised to sum 1, delays U[0, max_delay], angles uniform over
/// the sector, Doppler f_D,max * cos(psi) with psi uniform.
PathSet sample_paths(RngStream& rng, double velocity_kmh, std::size_t n_paths,
                     const OfdmNumerology& num = {}, const PathModel& model = {});

struct SlotRange {
  std::size_t first = 0;
  std::size_t count = 0;
};

/// Evaluates the multipath sum for every antenna, RB of `band` and slot in
/// `slots` (t_s = s * T_slot). Returns N_t grids of K x |slots|.
std::vector<ComplexGrid> synth_channel(const PathSet& paths, Band band, const OfdmNumerology& num,
                                       const ArrayGeometry& geom, SlotRange slots);

}  // namespace mcsp::chansim
