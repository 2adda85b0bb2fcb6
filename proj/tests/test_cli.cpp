// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "mcsp/chansim/dataset.hpp"
#include "mcsp/error.hpp"
#include "support.hpp"

namespace mcsp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

json read_json(const fs::path& p) { return json::parse(std::ifstream(p)); }

fs::path small_model_config(const fs::path& dir) {
  const auto p = dir / "model.json";
  std::ofstream(p) << R"({"F": 16, "layers": 2, "interval": 1, "state": 4})";
  return p;
}

TEST(Cli, GenCountsAndManifest) {
  const auto dir = test::scratch_dir("cli_gen");
  const auto r = invoke({"gen", "--out", (dir / "a.mcsp").string(), "--seed", "3", "--count", "10",
                         "--duplex", "fdd"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("samples: 40"), std::string::npos);
  const auto ds = chansim::read_dataset(dir / "a.mcsp");
  EXPECT_EQ(ds.samples.size(), 40u);
  EXPECT_EQ(ds.header.duplex, chansim::Duplex::FDD);
  const auto m = read_json(dir / "a.mcsp.manifest.json");
  EXPECT_EQ(m.at("command"), "gen");
  EXPECT_EQ(m.at("seed"), 3);
  EXPECT_EQ(m.at("tool_version"), kToolVersion);
  EXPECT_EQ(m.at("outputs")[0].at("sha256"), sha256_file(dir / "a.mcsp"));
  EXPECT_EQ(m.at("config").at("ue_count"), 10);
}

TEST(Cli, GenDeterministic) {
  const auto dir = test::scratch_dir("cli_det");
  for (const char* name : {"a.mcsp", "b.mcsp"}) {
    ASSERT_EQ(invoke({"gen", "--out", (dir / name).string(), "--seed", "9", "--count", "4",
                      "--velocities", "10,50"}).code,
              kExitOk);
  }
  EXPECT_EQ(sha256_file(dir / "a.mcsp"), sha256_file(dir / "b.mcsp"));
  ASSERT_EQ(invoke({"gen", "--out", (dir / "c.mcsp").string(), "--seed", "10", "--count", "4"}).code,
            kExitOk);
  EXPECT_NE(sha256_file(dir / "a.mcsp"), sha256_file(dir / "c.mcsp"));
}

TEST(Cli, Sha256KnownDigest) {
  const auto dir = test::scratch_dir("cli_sha");
  std::ofstream(dir / "abc") << "abc";
  EXPECT_EQ(sha256_file(dir / "abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_THROW(sha256_file(dir / "missing"), IoError);
}

TEST(Cli, TrainEvalRoundTrip) {
  const auto dir = test::scratch_dir("cli_train");
  const auto tr = (dir / "tr.mcsp").string(), va = (dir / "va.mcsp").string();
  ASSERT_EQ(invoke({"gen", "--out", tr, "--seed", "1", "--count", "4"}).code, kExitOk);
  ASSERT_EQ(invoke({"gen", "--out", va, "--seed", "2", "--count", "2"}).code, kExitOk);
  const auto ck = (dir / "m.mckp").string();
  const auto r = invoke({"train", "--data", tr, "--val", va, "--out", ck, "--model-config",
                         small_model_config(dir).string(), "--epochs", "2", "--batch", "8",
                         "--seed", "5"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(ck + ".loss.csv"));
  const auto m = read_json(ck + ".manifest.json");
  EXPECT_EQ(m.at("inputs").size(), 3u);
  EXPECT_EQ(m.at("config").at("model").at("K"), 48);
  const double best = m.at("best_val_nmse").get<double>();

  const auto rep = (dir / "r.json").string();
  const auto e = invoke({"eval", "--data", va, "--model", ck, "--report", rep, "--baseline"});
  ASSERT_EQ(e.code, kExitOk) << e.err;
  const auto j = read_json(rep);
  EXPECT_EQ(j.at("overall_nmse").get<double>(), best);
  EXPECT_EQ(j.at("sample_count"), 8);
  EXPECT_EQ(j.at("per_horizon").size(), 4u);
  EXPECT_TRUE(j.contains("persistence"));
  for (const auto& [bin, v] : j.at("per_velocity").items()) {
    EXPECT_EQ(std::stoi(bin) % 10, 0);
    EXPECT_TRUE(v.is_number());
  }
  EXPECT_TRUE(fs::exists(rep + ".manifest.json"));
}

TEST(Cli, UsageErrors) {
  const auto dir = test::scratch_dir("cli_usage");
  const auto tr = (dir / "tr.mcsp").string();
  ASSERT_EQ(invoke({"gen", "--out", tr, "--seed", "1", "--count", "1"}).code, kExitOk);
  EXPECT_EQ(invoke({"train", "--data", tr, "--val", tr, "--out", (dir / "m").string(), "--epochs", "0"}).code,
            kExitUsage);
  EXPECT_EQ(invoke({"bench", "--seq-lens", "16"}).code, kExitUsage);
  EXPECT_EQ(invoke({"bench", "--variants", "transformer"}).code, kExitUsage);
  EXPECT_EQ(invoke({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"gen", "--seed", "1"}).code, kExitUsage);
  EXPECT_EQ(invoke({"gen", "--out", tr, "--seed", "1", "--duplex", "xdd"}).code, kExitUsage);

  const auto empty = (dir / "empty.mcsp").string();
  ASSERT_EQ(invoke({"gen", "--out", empty, "--seed", "1", "--count", "0"}).code, kExitOk);
  EXPECT_EQ(invoke({"train", "--data", empty, "--val", tr, "--out", (dir / "m").string()}).code,
            kExitUsage);
}

TEST(Cli, IoErrors) {
  const auto dir = test::scratch_dir("cli_io");
  EXPECT_EQ(invoke({"gen", "--out", "/nonexistent/dir/a.mcsp", "--seed", "1", "--count", "1"}).code,
            kExitIo);
  EXPECT_EQ(invoke({"train", "--data", (dir / "missing.mcsp").string(), "--val", "x", "--out",
                    (dir / "m").string()}).code,
            kExitIo);
  std::ofstream(dir / "junk.mcsp") << "not a dataset";
  const auto junk = (dir / "junk.mcsp").string();
  EXPECT_EQ(invoke({"eval", "--data", junk, "--model", junk, "--report", (dir / "r").string()}).code,
            kExitIo);
  EXPECT_EQ(invoke({"gen", "--out", (dir / "a").string(), "--seed", "1", "--config",
                    (dir / "nope.json").string()}).code,
            kExitIo);
}

TEST(Cli, BenchWritesOutputs) {
  const auto dir = test::scratch_dir("cli_bench");
  const auto prefix = (dir / "b").string();
  const auto r = invoke({"bench", "--seq-lens", "8,16", "--F", "8", "--layers", "1", "--interval",
                         "1", "--warmup", "0", "--iters", "1", "--out", prefix});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("slope hybrid"), std::string::npos);
  EXPECT_NE(r.out.find("hybrid over full-attention"), std::string::npos);
  EXPECT_TRUE(fs::exists(prefix + ".csv"));
  EXPECT_TRUE(fs::exists(prefix + ".json"));
  EXPECT_TRUE(fs::exists(prefix + ".manifest.json"));
}

}  // namespace
}  // namespace mcsp::cli
