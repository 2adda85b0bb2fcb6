// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace mcsp::model {

enum class Variant { Hybrid, PlainSsm, FullAttention };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

enum class FreezePolicy {
  None,  // everything trainable
  Core,  // backbone frozen except its norms; tokenizer and head train
};

struct ModelConfig {
  Variant variant = Variant::Hybrid;

  // Data shape.
  std::size_t K = 48;
  std::size_t P = 16;
  std::size_t L = 4;

  // Tokenizer.
  std::size_t patch_size = 4;       // N in the patching step
  std::size_t n_mixer_cascade = 2;  // token mixer blocks per branch
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 3;
  std::size_t gate_reduction = 2;

  // Backbone.
  std::size_t F = 64;
  std::size_t layers = 8;    // L_M
  std::size_t interval = 4;  // k
  std::size_t heads = 2;     // H
  std::size_t state = 16;    // S
  std::size_t expand = 2;    // E = expand * F
  std::size_t ssm_conv_width = 4;
  std::size_t ff_mult = 4;   // full-attention feed-forward width factor

  FreezePolicy freeze = FreezePolicy::None;

  std::size_t patch_count() const noexcept { return (P + patch_size - 1) / patch_size; }
  std::size_t E() const noexcept { return expand * F; }
  std::size_t head_dim() const noexcept { return F / heads; }

  /// 1-based SSM block indices after which a patch mixer is applied
  /// (k, 2k, ... <= L_M) for the hybrid variant; empty otherwise.
  std::vector<std::size_t> mixer_positions() const;

  /// Throws InvalidArgument on inconsistent settings.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace mcsp::model
