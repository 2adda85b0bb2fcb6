// SPDX-License-Identifier: Apache-2.0
#include "mcsp/chansim/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <json.hpp>

#include "mcsp/error.hpp"

namespace mcsp::chansim {

using nlohmann::json;

OfdmNumerology DatasetConfig::numerology() const {
  OfdmNumerology n;
  n.f_c = f_c;
  n.delta_f = delta_f;
  n.K_ul = K;
  n.K_dl = K;
  n.T_slot = T_slot;
  n.duplex = duplex;
  return n;
}

void DatasetConfig::validate() const {
  if (K == 0 || P == 0 || L == 0) throw InvalidArgument("dataset: K, P and L must be >= 1");
  if (n_paths == 0) throw InvalidArgument("dataset: n_paths must be >= 1");
  if (geometry.n_t() == 0) throw InvalidArgument("dataset: array needs at least one element");
  if (velocities.empty()) throw InvalidArgument("dataset: velocity set is empty");
  for (double v : velocities) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("dataset: bad velocity");
  }
  if (dmrs.slot_stride == 0 || dmrs.rb_stride == 0) {
    throw InvalidArgument("dataset: DMRS strides must be >= 1");
  }
}

std::vector<Sample> generate_ue(const DatasetConfig& cfg, std::uint64_t seed, std::size_t ue) {
  const auto num = cfg.numerology();
  RngStream rng(seed, stream_id("ue", ue));
  const double velocity = cfg.velocities[rng.below(cfg.velocities.size())];
  const auto paths = sample_paths(rng, velocity, cfg.n_paths, num, cfg.path_model);
  const auto ul = synth_channel(paths, Band::UL, num, cfg.geometry, {0, cfg.P});
  const auto dl = synth_channel(paths, Band::DL, num, cfg.geometry, {cfg.P, cfg.L});
  std::vector<Sample> out;
  out.reserve(ul.size());
  for (std::size_t m = 0; m < ul.size(); ++m) {
    const auto obs = apply_dmrs_observation(ul[m], cfg.dmrs, rng);
    out.push_back(Sample{interpolate_pilots(obs), dl[m], velocity, m});
  }
  return out;
}

Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::vector<Sample>> per_ue(cfg.ue_count);
  const auto n = static_cast<std::ptrdiff_t>(cfg.ue_count);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t u = 0; u < n; ++u) {
    per_ue[u] = generate_ue(cfg, seed, static_cast<std::size_t>(u));
  }
  Dataset ds;
  ds.header = DatasetHeader{cfg.K,           cfg.P,   cfg.L, cfg.geometry.n_t(), cfg.duplex,
                            cfg.velocities, 0,       cfg.dmrs.snr_db, seed};
  for (auto& v : per_ue) {
    for (auto& s : v) ds.samples.push_back(std::move(s));
  }
  ds.header.sample_count = ds.samples.size();
  return ds;
}

namespace {

constexpr char kMagic[4] = {'M', 'C', 'S', 'P'};

json header_json(const DatasetHeader& h) {
  json j;
  j["K"] = h.K;
  j["P"] = h.P;
  j["L"] = h.L;
  j["n_t"] = h.n_t;
  j["duplex"] = to_string(h.duplex);
  j["velocities"] = h.velocities;
  j["sample_count"] = h.sample_count;
  // JSON has no infinity; a noiseless set is recorded as null.
  j["snr_db"] = std::isfinite(h.snr_db) ? json(h.snr_db) : json(nullptr);
  j["seed"] = h.seed;
  return j;
}

DatasetHeader header_from_json(const json& j) {
  DatasetHeader h;
  h.K = j.at("K").get<std::size_t>();
  h.P = j.at("P").get<std::size_t>();
  h.L = j.at("L").get<std::size_t>();
  h.n_t = j.at("n_t").get<std::size_t>();
  h.duplex = parse_duplex(j.at("duplex").get<std::string>());
  h.velocities = j.at("velocities").get<std::vector<double>>();
  h.sample_count = j.at("sample_count").get<std::size_t>();
  h.snr_db = j.at("snr_db").is_null() ? std::numeric_limits<double>::infinity()
                                      : j.at("snr_db").get<double>();
  h.seed = j.at("seed").get<std::uint64_t>();
  return h;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

double get_f32(const unsigned char* p) {
  return static_cast<double>(std::bit_cast<float>(get_u32(p)));
}

void put_grid(std::string& out, const ComplexGrid& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    put_f32(out, g.re()[i]);
    put_f32(out, g.im()[i]);
  }
}

void get_grid(const unsigned char*& p, ComplexGrid& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.re()[i] = get_f32(p);
    g.im()[i] = get_f32(p + 4);
    p += 8;
  }
}

}  // namespace

DatasetSummary write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto& h = ds.header;
  for (const auto& s : ds.samples) {
    if (s.ul_history.rows() != h.K || s.ul_history.cols() != h.P || s.dl_target.rows() != h.K ||
        s.dl_target.cols() != h.L) {
      throw InvalidArgument("write_dataset: sample shape does not match header");
    }
  }
  DatasetHeader hdr = h;
  hdr.sample_count = ds.samples.size();
  const std::string header = header_json(hdr).dump();

  std::string buf(kMagic, 4);
  put_u32(buf, kMcspVersion);
  put_u32(buf, static_cast<std::uint32_t>(header.size()));
  buf += header;
  buf.reserve(buf.size() + ds.samples.size() * (4 + 8 * h.K * (h.P + h.L)));
  for (const auto& s : ds.samples) {
    put_f32(buf, s.velocity);
    put_grid(buf, s.ul_history);
    put_grid(buf, s.dl_target);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("failed writing '" + path.string() + "'");
  return {hdr.sample_count, buf.size(), h.duplex};
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path.string() + "'");
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const auto* end = p + buf.size();
  auto need = [&](std::size_t n) {
    if (static_cast<std::size_t>(end - p) < n) {
      throw IoError("dataset '" + path.string() + "' is truncated");
    }
  };
  need(12);
  if (std::string_view(buf.data(), 4) != std::string_view(kMagic, 4)) {
    throw IoError("'" + path.string() + "' is not an MCSP file");
  }
  if (get_u32(p + 4) != kMcspVersion) throw IoError("unsupported MCSP version");
  const std::uint32_t hlen = get_u32(p + 8);
  p += 12;
  need(hlen);
  Dataset ds;
  try {
    ds.header = header_from_json(json::parse(std::string_view(reinterpret_cast<const char*>(p), hlen)));
  } catch (const json::exception& e) {
    throw IoError("malformed MCSP header: " + std::string(e.what()));
  }
  p += hlen;
  const auto& h = ds.header;
  const std::size_t per_sample = 4 + 8 * h.K * (h.P + h.L);
  need(per_sample * h.sample_count);
  if (static_cast<std::size_t>(end - p) != per_sample * h.sample_count) {
    throw IoError("dataset '" + path.string() + "' has trailing bytes");
  }
  ds.samples.reserve(h.sample_count);
  for (std::size_t i = 0; i < h.sample_count; ++i) {
    Sample s{ComplexGrid(h.K, h.P), ComplexGrid(h.K, h.L), get_f32(p), i % std::max<std::size_t>(1, h.n_t)};
    p += 4;
    get_grid(p, s.ul_history);
    get_grid(p, s.dl_target);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

json to_json(const DatasetConfig& c) {
  return {{"K", c.K},
          {"P", c.P},
          {"L", c.L},
          {"ue_count", c.ue_count},
          {"n_paths", c.n_paths},
          {"n_h", c.geometry.n_h},
          {"n_v", c.geometry.n_v},
          {"spacing", c.geometry.spacing},
          {"duplex", to_string(c.duplex)},
          {"velocities", c.velocities},
          {"slot_stride", c.dmrs.slot_stride},
          {"rb_stride", c.dmrs.rb_stride},
          {"snr_db", std::isfinite(c.dmrs.snr_db) ? json(c.dmrs.snr_db) : json(nullptr)},
          {"f_c", c.f_c},
          {"delta_f", c.delta_f},
          {"T_slot", c.T_slot},
          {"max_delay", c.path_model.max_delay},
          {"delay_decay", c.path_model.delay_decay},
          {"azimuth_half_width", c.path_model.azimuth_half_width},
          {"elevation_half_width", c.path_model.elevation_half_width}};
}

DatasetConfig dataset_config_from_json(const json& j) {
  if (!j.is_object()) throw InvalidArgument("dataset config must be a JSON object");
  DatasetConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("K", c.K);
    get("P", c.P);
    get("L", c.L);
    get("ue_count", c.ue_count);
    get("n_paths", c.n_paths);
    get("n_h", c.geometry.n_h);
    get("n_v", c.geometry.n_v);
    get("spacing", c.geometry.spacing);
    if (j.contains("duplex")) c.duplex = parse_duplex(j.at("duplex").get<std::string>());
    get("velocities", c.velocities);
    get("slot_stride", c.dmrs.slot_stride);
    get("rb_stride", c.dmrs.rb_stride);
    if (j.contains("snr_db")) {
      c.dmrs.snr_db = j.at("snr_db").is_null() ? std::numeric_limits<double>::infinity()
                                                : j.at("snr_db").get<double>();
    }
    get("f_c", c.f_c);
    get("delta_f", c.delta_f);
    get("T_slot", c.T_slot);
    get("max_delay", c.path_model.max_delay);
    get("delay_decay", c.path_model.delay_decay);
    get("azimuth_half_width", c.path_model.azimuth_half_width);
    get("elevation_half_width", c.path_model.elevation_half_width);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("dataset config: ") + e.what());
  }
  return c;
}

DatasetSummary generate_dataset_file(const DatasetConfig& cfg, std::uint64_t seed,
                                     const std::filesystem::path& path) {
  return write_dataset(generate_dataset(cfg, seed), path);
}

}  // namespace mcsp::chansim
