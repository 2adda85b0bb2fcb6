// SPDX-License-Identifier: Apache-2.0
#include "mcsp/chansim/channel.hpp"

#include <cmath>
#include <numbers>

#include "mcsp/error.hpp"

namespace mcsp::chansim {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// exp(j 2 pi x) with the integer part of x removed first.
cplx unit_phasor(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return {std::cos(kTwoPi * frac), std::sin(kTwoPi * frac)};
}
}  // namespace

std::string to_string(Duplex d) { return d == Duplex::TDD ? "tdd" : "fdd"; }

Duplex parse_duplex(const std::string& s) {
  if (s == "tdd" || s == "TDD") return Duplex::TDD;
  if (s == "fdd" || s == "FDD") return Duplex::FDD;
  throw InvalidArgument("unknown duplex mode '" + s + "' (expected tdd or fdd)");
}

double OfdmNumerology::rb_frequency(Band b, std::size_t k) const noexcept {
  const double rb = rb_bandwidth();
  const double ul_low = f_c - 0.5 * band_bandwidth(Band::UL);
  const double low = (b == Band::DL && duplex == Duplex::FDD) ? ul_low + band_bandwidth(Band::UL)
                                                              : ul_low;
  return low + (static_cast<double>(k) + 0.5) * rb;
}

std::vector<cplx> upa_steering(double theta, double phi, const ArrayGeometry& geom) {
  std::vector<cplx> a(geom.n_t());
  const double u = std::sin(theta) * std::cos(phi);
  const double v = std::sin(phi);
  for (std::size_t m = 0; m < geom.n_h; ++m) {
    for (std::size_t n = 0; n < geom.n_v; ++n) {
      const double ph = std::numbers::pi * geom.spacing * 2.0 *
                        (static_cast<double>(m) * u + static_cast<double>(n) * v);
      a[m * geom.n_v + n] = {std::cos(ph), std::sin(ph)};
    }
  }
  return a;
}

double max_doppler(double velocity_kmh, double f_c) noexcept {
  return (velocity_kmh / 3.6) * f_c / kSpeedOfLight;
}

PathSet sample_paths(RngStream& rng, double velocity_kmh, std::size_t n_paths,
                     const OfdmNumerology& num, const PathModel& model) {
  if (n_paths == 0) throw InvalidArgument("sample_paths: need at least one path");
  if (!(velocity_kmh >= 0.0)) throw InvalidArgument("sample_paths: velocity must be >= 0");
  const double fd_max = max_doppler(velocity_kmh, num.f_c);
  PathSet paths(n_paths);
  double total = 0.0;
  std::vector<double> power(n_paths);
  for (std::size_t l = 0; l < n_paths; ++l) {
    auto& p = paths[l];
    p.tau = rng.uniform(0.0, model.max_delay);
    p.theta = rng.uniform(-model.azimuth_half_width, model.azimuth_half_width);
    p.phi = rng.uniform(-model.elevation_half_width, model.elevation_half_width);
    p.f_doppler = fd_max * std::cos(rng.uniform(0.0, kTwoPi));
    power[l] = std::exp(-p.tau / model.delay_decay);
    total += power[l];
  }
  for (std::size_t l = 0; l < n_paths; ++l) {
    paths[l].alpha = rng.complex_normal(power[l] / total);
  }
  return paths;
}

std::vector<ComplexGrid> synth_channel(const PathSet& paths, Band band, const OfdmNumerology& num,
                                       const ArrayGeometry& geom, SlotRange slots) {
  if (slots.count == 0) throw InvalidArgument("synth_channel: empty slot range");
  if (geom.n_t() == 0) throw InvalidArgument("synth_channel: array has no elements");
  const std::size_t K = num.rb_count(band);
  const std::size_t S = slots.count;
  std::vector<ComplexGrid> out(geom.n_t(), ComplexGrid(K, S));

  // Per-path factors separate into antenna x frequency x time.
  for (const auto& p : paths) {
    const auto steer = upa_steering(p.theta, p.phi, geom);
    std::vector<cplx> freq(K), time(S);
    for (std::size_t k = 0; k < K; ++k) freq[k] = unit_phasor(-num.rb_frequency(band, k) * p.tau);
    for (std::size_t s = 0; s < S; ++s) {
      const double t = static_cast<double>(slots.first + s) * num.T_slot;
      time[s] = unit_phasor(p.f_doppler * t);
    }
    for (std::size_t m = 0; m < geom.n_t(); ++m) {
      const cplx am = p.alpha * steer[m];
      auto& re = out[m].re();
      auto& im = out[m].im();
      for (std::size_t k = 0; k < K; ++k) {
        const cplx amk = am * freq[k];
        for (std::size_t s = 0; s < S; ++s) {
          const cplx v = amk * time[s];
          re[k * S + s] += v.real();
          im[k * S + s] += v.imag();
        }
      }
    }
  }
  return out;
}

}  // namespace mcsp::chansim
