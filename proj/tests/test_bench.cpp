// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "mcsp/bench/bench.hpp"
#include "mcsp/error.hpp"
#include "support.hpp"

namespace mcsp::bench {
namespace {

using model::Variant;

TEST(Slope, ExactPowerLaws) {
  const std::vector<double> x{16, 32, 64, 128, 256};
  std::vector<double> lin, quad;
  for (double v : x) {
    lin.push_back(3.0 * v);
    quad.push_back(0.5 * v * v);
  }
  EXPECT_NEAR(fit_scaling_exponent(x, lin), 1.0, 1e-9);
  EXPECT_NEAR(fit_scaling_exponent(x, quad), 2.0, 1e-9);
}

TEST(Slope, MixedCurveLiesBetween) {
  const std::vector<double> x{16, 32, 64, 128, 256, 512, 1024};
  std::vector<double> y;
  for (double v : x) y.push_back(100.0 * v + 0.5 * v * v);
  const double s = fit_scaling_exponent(x, y);
  EXPECT_GT(s, 1.0);
  EXPECT_LT(s, 2.0);
}

TEST(Slope, InvalidInputs) {
  EXPECT_THROW(fit_scaling_exponent({16}, {1.0}), InvalidArgument);
  EXPECT_THROW(fit_scaling_exponent({16, 32}, {1.0}), InvalidArgument);
  EXPECT_THROW(fit_scaling_exponent({16, 32}, {1.0, 0.0}), InvalidArgument);
  EXPECT_THROW(fit_scaling_exponent({0, 32}, {1.0, 2.0}), InvalidArgument);
}

TEST(Config, Validation) {
  BenchConfig c;
  c.seq_lens = {16};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.seq_lens = {32, 16};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = BenchConfig{};
  c.variants.clear();
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(parse_mode("fast"), InvalidArgument);
  EXPECT_EQ(parse_mode("training"), Mode::Training);
}

TEST(Config, ModelConfigs) {
  const BenchConfig c;
  const auto h = bench_model_config(c, Variant::Hybrid);
  EXPECT_EQ(h.F, 64u);
  EXPECT_EQ(h.layers, 8u);
  EXPECT_EQ(h.interval, 4u);
  EXPECT_EQ(bench_model_config(c, Variant::FullAttention).variant, Variant::FullAttention);
}

BenchReport synthetic() {
  BenchReport r;
  r.config.seq_lens = {16, 32, 64};
  for (auto v : {Variant::Hybrid, Variant::FullAttention}) {
    for (std::size_t n : r.config.seq_lens) {
      BenchEntry e;
      e.variant = v;
      e.seq_len = n;
      const double scale = v == Variant::Hybrid ? 1.0 : 2.0;
      e.latency_ms = scale * n;
      e.throughput = 1000.0 / e.latency_ms;
      e.peak_bytes = static_cast<std::int64_t>(scale * 1000 * n);
      r.entries.push_back(e);
    }
  }
  return r;
}

TEST(Ratios, IdenticalVariantGivesOne) {
  const auto rows = ratio_table(synthetic(), Variant::Hybrid, Variant::Hybrid);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) {
    EXPECT_EQ(row.throughput, 1.0);
    EXPECT_EQ(row.latency, 1.0);
    EXPECT_EQ(row.memory, 1.0);
  }
}

TEST(Ratios, Direction) {
  const auto rows = ratio_table(synthetic(), Variant::FullAttention, Variant::Hybrid);
  for (const auto& row : rows) {
    EXPECT_DOUBLE_EQ(row.throughput, 2.0);
    EXPECT_DOUBLE_EQ(row.latency, 2.0);
    EXPECT_DOUBLE_EQ(row.memory, 2.0);
  }
  EXPECT_THROW(ratio_table(synthetic(), Variant::PlainSsm, Variant::Hybrid), InvalidArgument);
  EXPECT_NEAR(synthetic().slope(Variant::Hybrid), 1.0, 1e-9);
}

TEST(Run, SmallSweep) {
  BenchConfig c;
  c.seq_lens = {8, 16, 32};
  c.F = 16;
  c.layers = 2;
  c.interval = 1;
  c.warmup_iters = 1;
  c.measure_iters = 3;
  const auto r = run_bench(c, 1);
  ASSERT_EQ(r.entries.size(), 9u);
  for (const auto& e : r.entries) {
    EXPECT_TRUE(e.ok) << e.failure;
    EXPECT_GT(e.latency_ms, 0.0);
    EXPECT_NEAR(e.throughput, 1000.0 / e.latency_ms, 1e-9 * e.throughput);
    EXPECT_GT(e.peak_bytes, 0);
  }
  for (auto v : c.variants) {
    EXPECT_GT(r.find(v, 32)->peak_bytes, r.find(v, 8)->peak_bytes);
  }
  const auto dir = test::scratch_dir("bench");
  write_bench_csv(r, dir / "b.csv");
  std::ifstream is(dir / "b.csv");
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "variant,P_prime,latency_ms,throughput,peak_bytes");
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 9u);
  write_bench_json(r, dir / "b.json");
  const auto j = nlohmann::json::parse(std::ifstream(dir / "b.json"));
  EXPECT_EQ(j.at("entries").size(), 9u);
}

TEST(Run, TrainingMode) {
  BenchConfig c;
  c.variants = {Variant::Hybrid};
  c.seq_lens = {4, 8};
  c.F = 8;
  c.layers = 1;
  c.interval = 1;
  c.state = 4;
  c.warmup_iters = 0;
  c.measure_iters = 1;
  c.mode = Mode::Training;
  const auto r = run_bench(c, 1);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_TRUE(r.entries[0].ok);
}

}  // namespace
}  // namespace mcsp::bench
