// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "mcsp/model/config.hpp"
#include "mcsp/model/layers.hpp"
#include "mcsp/model/params.hpp"
#include "mcsp/numcore/complex_matrix.hpp"
#include "mcsp/pipeline/pipeline.hpp"

namespace mcsp::model {

/// Tokenizer + backbone + prediction head over one ParameterSet.
class Model {
 public:
  /// Fresh model; parameters initialised from `seed`.
  Model(ModelConfig cfg, std::uint64_t seed);
  /// Wraps existing parameters (e.g. from a checkpoint); validates that all
  /// expected names are present with the right shapes.
  Model(ModelConfig cfg, ParameterSet params);

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterSet& params() noexcept { return params_; }
  const ParameterSet& params() const noexcept { return params_; }
  const TokenizerLayers& tokenizer() const noexcept { return tokenizer_; }
  const BackboneLayers& backbone() const noexcept { return backbone_; }
  const HeadLayer& head() const noexcept { return head_; }

  /// Normalised-domain prediction X_hat [2K x L] for a preprocessed input.
  ad::Var forward(const Bound& bound, const pipeline::PatchedInput& in) const;

  /// History grid K x P -> predicted DL grid K x L (no gradients).
  ComplexMatrix predict(const ComplexMatrix& ul_history) const;

  /// Marks parameters frozen according to cfg.freeze.
  void apply_freeze_policy();

 private:
  void bind_layers();

  ModelConfig cfg_;
  ParameterSet params_;
  TokenizerLayers tokenizer_;
  BackboneLayers backbone_;
  HeadLayer head_{};
};

}  // namespace mcsp::model
