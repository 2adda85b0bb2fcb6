// SPDX-License-Identifier: Apache-2.0
#pragma once

// Latency, throughput and peak-memory sweep of the three backbones over
// sequence length, plus log-log scaling fits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcsp/model/config.hpp"

namespace mcsp::bench {

enum class Mode { Inference, Training };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

struct BenchConfig {
  std::vector<model::Variant> variants{model::Variant::Hybrid, model::Variant::PlainSsm,
                                       model::Variant::FullAttention};
  std::vector<std::size_t> seq_lens{16, 32, 64, 128, 256, 512, 1024};
  std::size_t F = 64;
  std::size_t layers = 8;
  std::size_t interval = 4;
  std::size_t heads = 2;
  std::size_t state = 16;
  std::size_t warmup_iters = 3;
  std::size_t measure_iters = 9;
  std::size_t batch = 1;  // samples per timed call
  Mode mode = Mode::Inference;

  void validate() const;
};

nlohmann::json to_json(const BenchConfig& c);

struct BenchEntry {
  model::Variant variant = model::Variant::Hybrid;
  std::size_t seq_len = 0;
  bool ok = true;
  std::string failure;
  double latency_ms = 0.0;  // median
  double throughput = 0.0;  // samples / s
  std::int64_t peak_bytes = 0;
};

struct RatioRow {
  std::size_t seq_len = 0;
  double throughput = 0.0;  // target / baseline
  double latency = 0.0;     // baseline / target
  double memory = 0.0;      // baseline / target
};

struct BenchReport {
  BenchConfig config;
  std::vector<BenchEntry> entries;

  const BenchEntry* find(model::Variant v, std::size_t seq_len) const;
  /// Slope over successful entries with seq_len >= min_seq_len.
  double slope(model::Variant v, std::size_t min_seq_len = 0) const;
};

/// Model config for a bench backbone of the given variant.
model::ModelConfig bench_model_config(const BenchConfig& cfg, model::Variant v);

/// Runs single-threaded; kernel parallelism is switched off for the sweep.
BenchReport run_bench(const BenchConfig& cfg, std::uint64_t seed);

/// Least-squares slope of log(y) against log(x).
double fit_scaling_exponent(const std::vector<double>& xs, const std::vector<double>& ys);

std::vector<RatioRow> ratio_table(const BenchReport& r, model::Variant baseline,
                                  model::Variant target);

nlohmann::json to_json(const BenchReport& r);
void write_bench_csv(const BenchReport& r, const std::filesystem::path& path);
void write_bench_json(const BenchReport& r, const std::filesystem::path& path);

}  // namespace mcsp::bench
