// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcsp/chansim/channel.hpp"
#include "mcsp/chansim/observation.hpp"

namespace mcsp::chansim {

/// One training example: densified, noisy UL history (K x P) and the
/// noiseless DL target (K x L).
struct Sample {
  ComplexGrid ul_history;
  ComplexGrid dl_target;
  double velocity = 0.0;  // km/h
  std::size_t antenna_index = 0;
};

/// Generator recipe. `ue_count` UEs are simulated; each contributes one
/// Sample per array element.
struct DatasetConfig {
  std::size_t K = 48;
  std::size_t P = 16;
  std::size_t L = 4;
  std::size_t ue_count = 128;
  std::size_t n_paths = 12;
  ArrayGeometry geometry{};
  Duplex duplex = Duplex::TDD;
  std::vector<double> velocities{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  DmrsPattern dmrs{};
  double f_c = 2.4e9;
  double delta_f = 15e3;
  double T_slot = 1e-3;
  PathModel path_model{};

  OfdmNumerology numerology() const;
  /// Throws InvalidArgument on inconsistent settings.
  void validate() const;
};

/// The JSON header carried by an MCSP file.
struct DatasetHeader {
  std::size_t K = 0;
  std::size_t P = 0;
  std::size_t L = 0;
  std::size_t n_t = 1;
  Duplex duplex = Duplex::TDD;
  std::vector<double> velocities;
  std::size_t sample_count = 0;
  double snr_db = 20.0;
  std::uint64_t seed = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Sample> samples;
};

struct DatasetSummary {
  std::size_t sample_count = 0;
  std::uintmax_t file_bytes = 0;
  Duplex duplex = Duplex::TDD;
};

/// Simulates every UE on its own RngStream (stream id = UE index), so the
/// result is independent of thread count and completion order.
Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed);

/// Generates the UE's samples (one per antenna); exposed for tests.
std::vector<Sample> generate_ue(const DatasetConfig& cfg, std::uint64_t seed, std::size_t ue);

inline constexpr std::uint32_t kMcspVersion = 1;

/// Flat JSON form of a DatasetConfig; missing keys keep their defaults.
/// snr_db may be null for a noiseless set.
nlohmann::json to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// MCSP layout: "MCSP" | version u32 LE | header length u32 LE | JSON header |
/// samples, each velocity f32 | ul K*P (re, im) f32 | dl K*L (re, im) f32,
/// grids row-major with RB as the outer index. Throws IoError.
DatasetSummary write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// generate_dataset + write_dataset.
DatasetSummary generate_dataset_file(const DatasetConfig& cfg, std::uint64_t seed,
                                     const std::filesystem::path& path);

}  // namespace mcsp::chansim
