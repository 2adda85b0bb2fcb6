// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "mcsp/bench/bench.hpp"
#include "mcsp/chansim/dataset.hpp"
#include "mcsp/error.hpp"
#include "mcsp/model/checkpoint.hpp"
#include "mcsp/trainer/trainer.hpp"

namespace mcsp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "' for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof buf);
    if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  }
  return hex.str();
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json file_entry(const fs::path& p) { return {{"path", p.string()}, {"sha256", sha256_file(p)}}; }

void write_manifest(const fs::path& artifact, const std::string& command,
                    const std::vector<std::string>& args, const json& config, std::uint64_t seed,
                    const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    const json& extra = json::object()) {
  json in = json::array(), outs = json::array();
  for (const auto& p : inputs) in.push_back(file_entry(p));
  for (const auto& p : outputs) outs.push_back(file_entry(p));
  json m{{"command", command},    {"args", args},
         {"config", config},      {"seed", seed},
         {"tool_version", kToolVersion}, {"timestamp", utc_timestamp()},
         {"inputs", in},          {"outputs", outs}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  const fs::path path = artifact.string() + ".manifest.json";
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write manifest '" + path.string() + "'");
  os << m.dump(2) << '\n';
}

// ---------------------------------------------------------------- gen

struct GenOpts {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string duplex;
  std::optional<std::size_t> count;
  std::vector<double> velocities;
};

int cmd_gen(const GenOpts& o, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg = o.config.empty() ? chansim::DatasetConfig{}
                              : chansim::dataset_config_from_json(read_json_file(o.config));
  if (!o.duplex.empty()) cfg.duplex = chansim::parse_duplex(o.duplex);
  if (o.count) cfg.ue_count = *o.count;
  if (!o.velocities.empty()) cfg.velocities = o.velocities;
  cfg.validate();
  const auto summary = chansim::generate_dataset_file(cfg, o.seed, o.out);
  std::vector<fs::path> inputs;
  if (!o.config.empty()) inputs.push_back(o.config);
  write_manifest(o.out, "gen", args, chansim::to_json(cfg), o.seed, inputs, {o.out});
  out << "samples: " << summary.sample_count << "\n"
      << "bytes: " << summary.file_bytes << "\n"
      << "duplex: " << chansim::to_string(summary.duplex) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string data, val, model_config, train_config, out, loss_csv;
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  bool clip = false;
};

model::ModelConfig resolve_model_config(const std::string& path, const chansim::DatasetHeader& h) {
  json j = path.empty() ? json::object() : read_json_file(path);
  if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
  // Data shape defaults to the training set's.
  if (!j.contains("K")) j["K"] = h.K;
  if (!j.contains("P")) j["P"] = h.P;
  if (!j.contains("L")) j["L"] = h.L;
  auto mc = model::model_config_from_json(j);
  mc.validate();
  return mc;
}

int cmd_train(const TrainOpts& o, const std::vector<std::string>& args, std::ostream& out,
              std::ostream& err) {
  auto tc = o.train_config.empty() ? trainer::TrainConfig{}
                                   : trainer::train_config_from_json(read_json_file(o.train_config));
  if (o.epochs) tc.epochs = *o.epochs;
  if (o.batch) tc.batch_size = *o.batch;
  if (o.lr) tc.lr = *o.lr;
  if (o.seed) tc.seed = *o.seed;
  if (o.clip) tc.clip = true;
  tc.validate();

  const auto train_set = chansim::read_dataset(o.data);
  const auto val_set = chansim::read_dataset(o.val);
  const auto mc = resolve_model_config(o.model_config, train_set.header);
  const model::Model init(mc, tc.seed);
  const fs::path loss_csv = o.loss_csv.empty() ? fs::path(o.out + ".loss.csv") : fs::path(o.loss_csv);

  trainer::TrainResult res;
  try {
    res = trainer::train(init, train_set, val_set, tc);
  } catch (const trainer::TrainingAborted& e) {
    const fs::path last = o.out + ".last_good.mckp";
    model::save_checkpoint(e.last_good(), last);
    err << "error: " << e.what() << "\nlast good checkpoint: " << last.string() << "\n";
    return kExitNumeric;
  }
  model::save_checkpoint(res.best, o.out);
  trainer::write_loss_csv(res.history, loss_csv);

  std::vector<fs::path> inputs{o.data, o.val};
  if (!o.model_config.empty()) inputs.push_back(o.model_config);
  if (!o.train_config.empty()) inputs.push_back(o.train_config);
  write_manifest(o.out, "train", args, {{"model", model::to_json(mc)}, {"train", trainer::to_json(tc)}},
                 tc.seed, inputs, {o.out, loss_csv},
                 {{"best_epoch", res.best_epoch}, {"best_val_nmse", res.best_val_nmse}});
  for (const auto& e : res.history) {
    out << "epoch " << e.epoch << " train_nmse " << e.train_nmse << " val_nmse " << e.val_nmse << "\n";
  }
  out << "best epoch " << res.best_epoch << " val_nmse " << std::setprecision(17)
      << res.best_val_nmse << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string data, model, report;
  bool baseline = false;
};

int cmd_eval(const EvalOpts& o, const std::vector<std::string>& args, std::ostream& out) {
  const auto ck = model::load_checkpoint(o.model);
  const auto m = model::to_model(ck);
  const auto ds = chansim::read_dataset(o.data);
  const auto rep = trainer::evaluate(m, ds);
  json j = trainer::to_json(rep);
  if (o.baseline) j["persistence"] = trainer::to_json(trainer::evaluate_persistence(ds));
  {
    std::ofstream os(o.report, std::ios::trunc);
    if (!os) throw IoError("cannot open '" + o.report + "' for writing");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing '" + o.report + "'");
  }
  write_manifest(o.report, "eval", args, {{"baseline", o.baseline}}, ds.header.seed,
                 {o.data, o.model}, {o.report});
  out << "overall_nmse " << std::setprecision(17) << rep.overall_nmse << "\n";
  for (const auto& [bin, v] : rep.per_velocity) out << "  v" << bin << " " << v << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  std::vector<std::string> variants{"hybrid", "plain-ssm", "full-attention"};
  std::vector<std::size_t> seq_lens{16, 32, 64, 128, 256, 512, 1024};
  std::string mode = "inference";
  std::string out;
  std::uint64_t seed = 0;
  bench::BenchConfig base;
};

int cmd_bench(const BenchOpts& o, const std::vector<std::string>& args, std::ostream& out) {
  auto cfg = o.base;
  cfg.variants.clear();
  for (const auto& v : o.variants) cfg.variants.push_back(model::parse_variant(v));
  cfg.seq_lens = o.seq_lens;
  cfg.mode = bench::parse_mode(o.mode);
  cfg.validate();
  const auto rep = bench::run_bench(cfg, o.seed);

  out << "variant,P_prime,latency_ms,throughput,peak_bytes\n";
  for (const auto& e : rep.entries) {
    out << model::to_string(e.variant) << "," << e.seq_len << ",";
    if (e.ok) {
      out << e.latency_ms << "," << e.throughput << "," << e.peak_bytes << "\n";
    } else {
      out << "failed: " << e.failure << "\n";
    }
  }
  for (auto v : cfg.variants) {
    out << "slope " << model::to_string(v) << " " << rep.slope(v);
    try {
      out << " (P' >= 128: " << rep.slope(v, 128) << ")";
    } catch (const InvalidArgument&) {
    }
    out << "\n";
  }
  const auto has = [&](model::Variant v) {
    return std::find(cfg.variants.begin(), cfg.variants.end(), v) != cfg.variants.end();
  };
  if (has(model::Variant::Hybrid) && has(model::Variant::FullAttention)) {
    out << "hybrid over full-attention: P_prime,throughput,latency,memory\n";
    for (const auto& r : bench::ratio_table(rep, model::Variant::FullAttention, model::Variant::Hybrid)) {
      out << "  " << r.seq_len << "," << r.throughput << "," << r.latency << "," << r.memory << "\n";
    }
  }
  if (!o.out.empty()) {
    const fs::path csv = o.out + ".csv", js = o.out + ".json";
    bench::write_bench_csv(rep, csv);
    bench::write_bench_json(rep, js);
    write_manifest(o.out, "bench", args, bench::to_json(cfg), o.seed, {}, {csv, js});
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"CSI prediction toolkit: dataset generation, training, evaluation, benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  GenOpts gen;
  auto* g = app.add_subcommand("gen", "Generate an MCSP dataset");
  g->add_option("--config", gen.config, "Dataset config JSON");
  g->add_option("--out", gen.out, "Output .mcsp path")->required();
  g->add_option("--seed", gen.seed, "Seed")->required();
  g->add_option("--duplex", gen.duplex, "tdd | fdd");
  g->add_option("--count", gen.count, "UE count (samples = count x antennas)");
  g->add_option("--velocities", gen.velocities, "Comma separated km/h")->delimiter(',');

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--data", tr.data, "Training set")->required();
  t->add_option("--val", tr.val, "Validation set")->required();
  t->add_option("--model-config", tr.model_config, "Model config JSON");
  t->add_option("--train-config", tr.train_config, "Training config JSON");
  t->add_option("--out", tr.out, "Output checkpoint")->required();
  t->add_option("--loss-csv", tr.loss_csv, "Loss history CSV (default <out>.loss.csv)");
  t->add_option("--epochs", tr.epochs, "Epochs");
  t->add_option("--batch", tr.batch, "Batch size");
  t->add_option("--lr", tr.lr, "Learning rate");
  t->add_option("--seed", tr.seed, "Seed for init and shuffling");
  t->add_flag("--clip", tr.clip, "Clip gradients at global norm 10");

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--data", ev.data, "Test set")->required();
  e->add_option("--model", ev.model, "Checkpoint")->required();
  e->add_option("--report", ev.report, "Report JSON")->required();
  e->add_flag("--baseline", ev.baseline, "Include the persistence baseline");

  BenchOpts bo;
  auto* b = app.add_subcommand("bench", "Backbone scaling benchmark");
  b->add_option("--variants", bo.variants, "hybrid,plain-ssm,full-attention")->delimiter(',');
  b->add_option("--seq-lens", bo.seq_lens, "Comma separated P' values")->delimiter(',');
  b->add_option("--mode", bo.mode, "inference | training");
  b->add_option("--out", bo.out, "Output prefix for .csv/.json");
  b->add_option("--seed", bo.seed, "Seed");
  b->add_option("--F", bo.base.F, "Embedding width");
  b->add_option("--layers", bo.base.layers, "Backbone layers");
  b->add_option("--interval", bo.base.interval, "Mixer interval");
  b->add_option("--heads", bo.base.heads, "Attention heads");
  b->add_option("--warmup", bo.base.warmup_iters, "Warmup iterations");
  b->add_option("--iters", bo.base.measure_iters, "Measured iterations");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*g) return cmd_gen(gen, args, out);
    if (*t) return cmd_train(tr, args, out, err);
    if (*e) return cmd_eval(ev, args, out);
    if (*b) return cmd_bench(bo, args, out);
  } catch (const InvalidArgument& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const IoError& ex) {
    err << "io error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& ex) {
    err << "io error: " << ex.what() << "\n";
    return kExitIo;
  } catch (const NumericFailure& ex) {
    err << "numeric failure: " << ex.what() << "\n";
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace mcsp::cli
