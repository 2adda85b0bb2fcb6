// SPDX-License-Identifier: Apache-2.0
#include "mcsp/model/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string_view>

#include <json.hpp>

#include "mcsp/error.hpp"

namespace mcsp::model {

using nlohmann::json;

namespace {

constexpr std::string_view kMagic = "MCKP";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

}  // namespace

Checkpoint make_checkpoint(const Model& m) {
  Checkpoint c{m.config(), m.params()};
  c.params.round_to_f32();
  return c;
}

Model to_model(const Checkpoint& c) { return Model(c.config, c.params); }

std::string encode_checkpoint(const Checkpoint& c) {
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& p : c.params) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.value.shape()},
                        {"offset", offset},
                        {"trainable", p.trainable}});
    offset += p.value.numel();
  }
  const std::string header = json{{"config", to_json(c.config)}, {"params", manifest}}.dump();
  std::string out(kMagic);
  put_u32(out, kMckpVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out.reserve(out.size() + 4 * offset);
  for (const auto& p : c.params) {
    for (double v : p.value.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::string_view(bytes.data(), 4) != kMagic) throw IoError("not an MCKP checkpoint");
  if (get_u32(p + 4) != kMckpVersion) throw IoError("unsupported MCKP version");
  const std::size_t hlen = get_u32(p + 8);
  if (n - 12 < hlen) throw IoError("checkpoint truncated in header");
  Checkpoint c;
  std::size_t payload = 0;
  try {
    const auto h = json::parse(std::string_view(bytes.data() + 12, hlen));
    c.config = model_config_from_json(h.at("config"));
    for (const auto& e : h.at("params")) {
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset != payload) throw IoError("checkpoint parameter offsets are not contiguous");
      Tensor t(shape);
      c.params.add(e.at("name").get<std::string>(), std::move(t), e.at("trainable").get<bool>());
      payload += shape_numel(shape);
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed MCKP header: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(std::string("malformed MCKP header: ") + e.what());
  }
  if (n - 12 - hlen != 4 * payload) throw IoError("checkpoint payload size mismatch");
  const unsigned char* q = p + 12 + hlen;
  for (auto& prm : c.params) {
    for (double& v : prm.value.data()) {
      v = static_cast<double>(std::bit_cast<float>(get_u32(q)));
      q += 4;
    }
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(c);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mcsp::model
