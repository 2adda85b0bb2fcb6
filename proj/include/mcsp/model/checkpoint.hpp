// SPDX-License-Identifier: Apache-2.0
#pragma once

// MCKP checkpoint: "MCKP" | u32 version | u32 header length | JSON header
// {config, params: [{name, shape, offset, trainable}]} | f32 LE payload.

#include <cstdint>
#include <filesystem>
#include <string>

#include "mcsp/model/config.hpp"
#include "mcsp/model/model.hpp"
#include "mcsp/model/params.hpp"

namespace mcsp::model {

inline constexpr std::uint32_t kMckpVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
};

Checkpoint make_checkpoint(const Model& m);
/// Rebuilds a model; throws InvalidArgument if params do not fit the config.
Model to_model(const Checkpoint& c);

std::string encode_checkpoint(const Checkpoint& c);
/// Throws IoError on malformed bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mcsp::model
