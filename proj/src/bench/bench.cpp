// SPDX-License-Identifier: Apache-2.0
#include "mcsp/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <new>

#include "mcsp/error.hpp"
#include "mcsp/model/layers.hpp"
#include "mcsp/numcore/alloc.hpp"
#include "mcsp/numcore/kernels.hpp"
#include "mcsp/numcore/rng.hpp"

namespace mcsp::bench {

using model::Variant;
using nlohmann::json;

std::string to_string(Mode m) { return m == Mode::Training ? "training" : "inference"; }

Mode parse_mode(const std::string& s) {
  if (s == "inference") return Mode::Inference;
  if (s == "training") return Mode::Training;
  throw InvalidArgument("unknown bench mode '" + s + "' (inference | training)");
}

void BenchConfig::validate() const {
  if (variants.empty()) throw InvalidArgument("bench: no variants");
  if (seq_lens.size() < 2) throw InvalidArgument("bench: slope fits need at least 2 seq lens");
  for (std::size_t i = 0; i < seq_lens.size(); ++i) {
    if (seq_lens[i] == 0) throw InvalidArgument("bench: seq lens must be positive");
    if (i > 0 && seq_lens[i] <= seq_lens[i - 1]) {
      throw InvalidArgument("bench: seq lens must be strictly increasing");
    }
  }
  if (measure_iters == 0 || batch == 0) throw InvalidArgument("bench: iters and batch must be >= 1");
}

json to_json(const BenchConfig& c) {
  json vs = json::array();
  for (auto v : c.variants) vs.push_back(model::to_string(v));
  return {{"variants", vs},          {"seq_lens", c.seq_lens},
          {"F", c.F},                {"layers", c.layers},
          {"interval", c.interval},  {"heads", c.heads},
          {"state", c.state},        {"warmup_iters", c.warmup_iters},
          {"measure_iters", c.measure_iters}, {"batch", c.batch},
          {"mode", to_string(c.mode)}};
}

model::ModelConfig bench_model_config(const BenchConfig& cfg, Variant v) {
  model::ModelConfig mc;
  mc.variant = v;
  mc.F = cfg.F;
  mc.layers = cfg.layers;
  mc.interval = cfg.interval;
  mc.heads = cfg.heads;
  mc.state = cfg.state;
  return mc;
}

namespace {

// Restores the kernel dispatch mode on scope exit.
struct SerialScope {
  bool prev = kernels::parallel_enabled();
  SerialScope() { kernels::set_parallel(false); }
  ~SerialScope() { kernels::set_parallel(prev); }
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

BenchEntry measure(const BenchConfig& cfg, Variant variant, std::size_t T, std::uint64_t seed) {
  BenchEntry e;
  e.variant = variant;
  e.seq_len = T;
  const auto mc = bench_model_config(cfg, variant);
  model::ParameterSet ps;
  const auto layers = model::add_backbone(ps, mc, seed);
  Tensor x({cfg.F, T});
  RngStream rng(seed, stream_id("bench.input", T));
  for (double& v : x.data()) v = rng.normal();

  const bool train = cfg.mode == Mode::Training;
  auto once = [&] {
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const model::Bound bound(ps, train);
      auto y = model::backbone_forward(bound, layers, ad::Var::view(x));
      if (train) ad::sum(y).backward();
    }
  };
  try {
    for (std::size_t i = 0; i < cfg.warmup_iters; ++i) once();
    std::vector<double> ms;
    ms.reserve(cfg.measure_iters);
    for (std::size_t i = 0; i < cfg.measure_iters; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      once();
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    e.latency_ms = median(ms);
    e.throughput = static_cast<double>(cfg.batch) / (e.latency_ms * 1e-3);
    e.peak_bytes = with_alloc_tracking(once);
  } catch (const std::bad_alloc&) {
    e.ok = false;
    e.failure = "out of memory";
  }
  return e;
}

}  // namespace

const BenchEntry* BenchReport::find(Variant v, std::size_t seq_len) const {
  for (const auto& e : entries) {
    if (e.variant == v && e.seq_len == seq_len) return &e;
  }
  return nullptr;
}

double BenchReport::slope(Variant v, std::size_t min_seq_len) const {
  std::vector<double> xs, ys;
  for (const auto& e : entries) {
    if (e.variant == v && e.ok && e.seq_len >= min_seq_len) {
      xs.push_back(static_cast<double>(e.seq_len));
      ys.push_back(e.latency_ms);
    }
  }
  return fit_scaling_exponent(xs, ys);
}

BenchReport run_bench(const BenchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  for (auto v : cfg.variants) bench_model_config(cfg, v).validate();
  const SerialScope serial;
  BenchReport r;
  r.config = cfg;
  for (auto v : cfg.variants) {
    for (std::size_t T : cfg.seq_lens) r.entries.push_back(measure(cfg, v, T, seed));
  }
  return r;
}

double fit_scaling_exponent(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("fit: x and y lengths differ");
  if (xs.size() < 2) throw InvalidArgument("fit: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw InvalidArgument("fit: values must be positive");
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den <= 0.0) throw InvalidArgument("fit: x values must not all be equal");
  return (n * sxy - sx * sy) / den;
}

std::vector<RatioRow> ratio_table(const BenchReport& r, Variant baseline, Variant target) {
  auto has = [&](Variant v) {
    return std::any_of(r.entries.begin(), r.entries.end(),
                       [&](const BenchEntry& e) { return e.variant == v; });
  };
  if (!has(baseline) || !has(target)) {
    throw InvalidArgument("ratio table: variant missing from report");
  }
  std::vector<RatioRow> rows;
  for (std::size_t T : r.config.seq_lens) {
    const auto* b = r.find(baseline, T);
    const auto* t = r.find(target, T);
    if (!b || !t || !b->ok || !t->ok) continue;
    rows.push_back({T, t->throughput / b->throughput, b->latency_ms / t->latency_ms,
                    static_cast<double>(b->peak_bytes) / static_cast<double>(t->peak_bytes)});
  }
  return rows;
}

json to_json(const BenchReport& r) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    json j{{"variant", model::to_string(e.variant)}, {"P_prime", e.seq_len}, {"ok", e.ok}};
    if (e.ok) {
      j["latency_ms"] = e.latency_ms;
      j["throughput"] = e.throughput;
      j["peak_bytes"] = e.peak_bytes;
    } else {
      j["failure"] = e.failure;
    }
    entries.push_back(j);
  }
  json slopes = json::object();
  json slopes128 = json::object();
  for (auto v : r.config.variants) {
    try {
      slopes[model::to_string(v)] = r.slope(v);
    } catch (const InvalidArgument&) {
      slopes[model::to_string(v)] = nullptr;
    }
    try {
      slopes128[model::to_string(v)] = r.slope(v, 128);
    } catch (const InvalidArgument&) {
      slopes128[model::to_string(v)] = nullptr;
    }
  }
  json ratios = json::object();
  const auto& vs = r.config.variants;
  auto present = [&](Variant v) { return std::find(vs.begin(), vs.end(), v) != vs.end(); };
  auto table = [&](Variant base, Variant tgt) {
    json rows = json::array();
    for (const auto& row : ratio_table(r, base, tgt)) {
      rows.push_back({{"P_prime", row.seq_len},
                      {"throughput", row.throughput},
                      {"latency", row.latency},
                      {"memory", row.memory}});
    }
    return rows;
  };
  if (present(Variant::Hybrid) && present(Variant::FullAttention)) {
    ratios["hybrid_vs_full-attention"] = table(Variant::FullAttention, Variant::Hybrid);
  }
  if (present(Variant::Hybrid) && present(Variant::PlainSsm)) {
    ratios["plain-ssm_vs_hybrid"] = table(Variant::Hybrid, Variant::PlainSsm);
  }
  return {{"config", to_json(r.config)},
          {"entries", entries},
          {"slopes", slopes},
          {"slopes_from_128", slopes128},
          {"ratios", ratios}};
}

void write_bench_csv(const BenchReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << "variant,P_prime,latency_ms,throughput,peak_bytes\n";
  char line[160];
  for (const auto& e : r.entries) {
    if (e.ok) {
      std::snprintf(line, sizeof line, "%s,%zu,%.6g,%.6g,%lld\n", model::to_string(e.variant).c_str(),
                    e.seq_len, e.latency_ms, e.throughput, static_cast<long long>(e.peak_bytes));
    } else {
      std::snprintf(line, sizeof line, "%s,%zu,,,\n", model::to_string(e.variant).c_str(), e.seq_len);
    }
    os << line;
  }
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

void write_bench_json(const BenchReport& r, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << to_json(r).dump(2) << '\n';
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace mcsp::bench
