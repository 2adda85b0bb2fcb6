// SPDX-License-Identifier: Apache-2.0
#pragma once

// Learnable building blocks. Each layer is a bundle of indices into a
// ParameterSet; forward functions read the bound leaves.

#include <cstdint>
#include <string>
#include <vector>

#include "mcsp/model/config.hpp"
#include "mcsp/model/params.hpp"

namespace mcsp::model {

/// conv(3x3, 1 -> C) -> ReLU -> conv(3x3, C -> 1) feature path plus a
/// sigmoid gate over patches computed from the pooled features.
struct TokenMixerLayer {
  std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
  std::size_t fc1_w, fc1_b, fc2_w, fc2_b;
};

struct SsmLayer {
  std::size_t norm_g, norm_b;
  std::size_t w_in, w_gate;
  std::size_t conv_w, conv_b;
  std::size_t w_delta, b_delta;
  std::size_t w_b, w_c;
  std::size_t a_log, d_skip;
  std::size_t w_out;
};

struct MixerLayer {
  std::size_t norm_g, norm_b;
  std::size_t w_q, w_k, w_v, w_o;
};

struct FeedForwardLayer {
  std::size_t norm_g, norm_b;
  std::size_t w1, b1, w2, b2;
};

struct TokenizerLayers {
  std::vector<TokenMixerLayer> freq;
  std::vector<TokenMixerLayer> delay;
  std::size_t proj_w, proj_b;
};

struct BackboneLayers {
  Variant variant = Variant::Hybrid;
  std::size_t heads = 1;
  std::vector<SsmLayer> ssm;
  std::vector<std::size_t> mixer_after;  // 1-based, parallel to `mixers`
  std::vector<MixerLayer> mixers;
  // full-attention: one mixer + feed-forward per layer
  std::vector<MixerLayer> attn;
  std::vector<FeedForwardLayer> ff;
  std::size_t final_norm_g, final_norm_b;
};

struct HeadLayer {
  std::size_t w, b;
};

// ---- registration (creates and initialises parameters) ----

TokenMixerLayer add_token_mixer(ParameterSet& ps, const std::string& prefix,
                                const ModelConfig& cfg, std::uint64_t seed);
TokenizerLayers add_tokenizer(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed);
SsmLayer add_ssm_block(ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg,
                       std::uint64_t seed);
MixerLayer add_patch_mixer(ParameterSet& ps, const std::string& prefix, const ModelConfig& cfg,
                           std::uint64_t seed);
FeedForwardLayer add_feed_forward(ParameterSet& ps, const std::string& prefix,
                                  const ModelConfig& cfg, std::uint64_t seed);
BackboneLayers add_backbone(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed);
HeadLayer add_head(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed);

/// Resolves layer indices for parameters already present (checkpoint load).
TokenizerLayers find_tokenizer(const ParameterSet& ps, const ModelConfig& cfg);
BackboneLayers find_backbone(const ParameterSet& ps, const ModelConfig& cfg);
HeadLayer find_head(const ParameterSet& ps);

// ---- forward ----

/// One token mixer block on X_i [2K x N x P'].
ad::Var token_mixer_forward(const Bound& p, const TokenMixerLayer& layer, const ad::Var& x);

/// Both cascades, sum, rearrangement to [2KN x P'], projection to [F x P']
/// and positional encoding.
ad::Var tokenize(const Bound& p, const TokenizerLayers& layers, const Tensor& x_f_p,
                 const Tensor& x_tau_p);

/// Sinusoidal encoding [F x P']: sin(j / 10000^(i/F)) for even i,
/// cos(j / 10000^((i-1)/F)) for odd i.
Tensor positional_encoding(std::size_t F, std::size_t n_tokens);

/// Selective SSM block with pre-norm and residual, X [F x T] -> [F x T].
ad::Var ssm_block_forward(const Bound& p, const SsmLayer& layer, const ad::Var& x);

/// Multi-head attention across tokens (columns) with pre-norm; returns the
/// mixer output only, without the residual.
ad::Var patch_mixer_forward(const Bound& p, const MixerLayer& layer, std::size_t heads,
                            const ad::Var& x);

ad::Var feed_forward(const Bound& p, const FeedForwardLayer& layer, const ad::Var& x);

ad::Var backbone_forward(const Bound& p, const BackboneLayers& layers, const ad::Var& x_emb);

/// Flattens X_seq [F x P'] feature-major, one affine map, reshape to [2K x L].
ad::Var head_project(const Bound& p, const HeadLayer& head, const ad::Var& x_seq, std::size_t K,
                     std::size_t L);

}  // namespace mcsp::model
