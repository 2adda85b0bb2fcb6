// SPDX-License-Identifier: Apache-2.0
#include "mcsp/model/layers.hpp"

#include <cmath>

#include "mcsp/error.hpp"

namespace mcsp::model {

// ---------------------------------------------------------------- params

std::size_t ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (index_.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value), trainable});
  return params_.size() - 1;
}

std::size_t ParameterSet::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

void ParameterSet::round_to_f32() {
  for (auto& p : params_) {
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.name != y.name || x.trainable != y.trainable || x.value.shape() != y.value.shape()) {
      return false;
    }
    for (std::size_t k = 0; k < x.value.numel(); ++k) {
      if (x.value[k] != y.value[k]) return false;
    }
  }
  return true;
}

Bound::Bound(const ParameterSet& params, bool with_grad) {
  vars_.reserve(params.size());
  for (const auto& p : params) vars_.push_back(ad::Var::view(p.value, with_grad && p.trainable));
}

Tensor init_uniform(const Shape& shape, double bound, std::uint64_t seed, const std::string& name) {
  RngStream rng(seed, stream_id(name));
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

// ---------------------------------------------------------------- registration

namespace {

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

// Kaiming-uniform bound for ReLU-followed convolutions.
double kaiming_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

std::size_t add_linear_w(ParameterSet& ps, const std::string& name, std::size_t out,
                         std::size_t in, std::uint64_t seed) {
  return ps.add(name, init_uniform({out, in}, fan_in_bound(in), seed, name));
}

std::size_t add_zeros(ParameterSet& ps, const std::string& name, Shape shape) {
  return ps.add(name, Tensor(std::move(shape), 0.0));
}

std::size_t add_fill(ParameterSet& ps, const std::string& name, Shape shape, double v) {
  return ps.add(name, Tensor(std::move(shape), v));
}

std::size_t gate_hidden(const ModelConfig& cfg) {
  const std::size_t pp = cfg.patch_count();
  return (pp + cfg.gate_reduction - 1) / cfg.gate_reduction;
}

}  // namespace

TokenMixerLayer add_token_mixer(ParameterSet& ps, const std::string& pre, const ModelConfig& cfg,
                                std::uint64_t seed) {
  const std::size_t C = cfg.conv_channels, k = cfg.conv_kernel;
  const std::size_t pp = cfg.patch_count(), hid = gate_hidden(cfg);
  TokenMixerLayer l{};
  l.conv1_w = ps.add(pre + "conv1_w", init_uniform({C, 1, k, k}, kaiming_bound(k * k), seed, pre + "conv1_w"));
  l.conv1_b = add_zeros(ps, pre + "conv1_b", {C});
  l.conv2_w = ps.add(pre + "conv2_w", init_uniform({1, C, k, k}, fan_in_bound(C * k * k), seed, pre + "conv2_w"));
  l.conv2_b = add_zeros(ps, pre + "conv2_b", {1});
  l.fc1_w = add_linear_w(ps, pre + "fc1_w", hid, pp, seed);
  l.fc1_b = add_zeros(ps, pre + "fc1_b", {hid});
  l.fc2_w = add_linear_w(ps, pre + "fc2_w", pp, hid, seed);
  l.fc2_b = add_zeros(ps, pre + "fc2_b", {pp});
  return l;
}

TokenizerLayers add_tokenizer(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  TokenizerLayers t;
  for (std::size_t i = 0; i < cfg.n_mixer_cascade; ++i) {
    t.freq.push_back(add_token_mixer(ps, "tok.freq." + std::to_string(i) + ".", cfg, seed));
  }
  for (std::size_t i = 0; i < cfg.n_mixer_cascade; ++i) {
    t.delay.push_back(add_token_mixer(ps, "tok.delay." + std::to_string(i) + ".", cfg, seed));
  }
  const std::size_t in = 2 * cfg.K * cfg.patch_size;
  t.proj_w = add_linear_w(ps, "tok.proj_w", cfg.F, in, seed);
  t.proj_b = add_zeros(ps, "tok.proj_b", {cfg.F});
  return t;
}

SsmLayer add_ssm_block(ParameterSet& ps, const std::string& pre, const ModelConfig& cfg,
                       std::uint64_t seed) {
  const std::size_t F = cfg.F, E = cfg.E(), S = cfg.state, W = cfg.ssm_conv_width;
  SsmLayer l{};
  l.norm_g = add_fill(ps, pre + "norm_g", {F}, 1.0);
  l.norm_b = add_zeros(ps, pre + "norm_b", {F});
  l.w_in = add_linear_w(ps, pre + "w_in", E, F, seed);
  l.w_gate = add_linear_w(ps, pre + "w_gate", E, F, seed);
  l.conv_w = ps.add(pre + "conv_w", init_uniform({E, W}, fan_in_bound(W), seed, pre + "conv_w"));
  l.conv_b = add_zeros(ps, pre + "conv_b", {E});
  // Step size starts at softplus(b) = 0.05 for every channel.
  l.w_delta = add_zeros(ps, pre + "w_delta", {E});
  l.b_delta = add_fill(ps, pre + "b_delta", {E}, std::log(std::expm1(0.05)));
  l.w_b = add_linear_w(ps, pre + "w_b", S, E, seed);
  l.w_c = add_linear_w(ps, pre + "w_c", S, E, seed);
  Tensor a_log({E, S});
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t s = 0; s < S; ++s) a_log.at(e, s) = std::log(static_cast<double>(s + 1));
  l.a_log = ps.add(pre + "a_log", std::move(a_log));
  l.d_skip = add_fill(ps, pre + "d_skip", {E}, 1.0);
  l.w_out = add_linear_w(ps, pre + "w_out", F, E, seed);
  return l;
}

MixerLayer add_patch_mixer(ParameterSet& ps, const std::string& pre, const ModelConfig& cfg,
                           std::uint64_t seed) {
  const std::size_t F = cfg.F;
  MixerLayer l{};
  l.norm_g = add_fill(ps, pre + "norm_g", {F}, 1.0);
  l.norm_b = add_zeros(ps, pre + "norm_b", {F});
  l.w_q = add_linear_w(ps, pre + "w_q", F, F, seed);
  l.w_k = add_linear_w(ps, pre + "w_k", F, F, seed);
  l.w_v = add_linear_w(ps, pre + "w_v", F, F, seed);
  l.w_o = add_linear_w(ps, pre + "w_o", F, F, seed);
  return l;
}

FeedForwardLayer add_feed_forward(ParameterSet& ps, const std::string& pre, const ModelConfig& cfg,
                                  std::uint64_t seed) {
  const std::size_t F = cfg.F, H = cfg.ff_mult * cfg.F;
  FeedForwardLayer l{};
  l.norm_g = add_fill(ps, pre + "norm_g", {F}, 1.0);
  l.norm_b = add_zeros(ps, pre + "norm_b", {F});
  l.w1 = add_linear_w(ps, pre + "w1", H, F, seed);
  l.b1 = add_zeros(ps, pre + "b1", {H});
  l.w2 = add_linear_w(ps, pre + "w2", F, H, seed);
  l.b2 = add_zeros(ps, pre + "b2", {F});
  return l;
}

BackboneLayers add_backbone(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BackboneLayers b;
  b.variant = cfg.variant;
  b.heads = cfg.heads;
  if (cfg.variant == Variant::FullAttention) {
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      const std::string idx = std::to_string(i);
      b.attn.push_back(add_patch_mixer(ps, "bb.attn." + idx + ".", cfg, seed));
      b.ff.push_back(add_feed_forward(ps, "bb.ff." + idx + ".", cfg, seed));
    }
  } else {
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      b.ssm.push_back(add_ssm_block(ps, "bb.ssm." + std::to_string(i) + ".", cfg, seed));
    }
    b.mixer_after = cfg.mixer_positions();
    for (std::size_t i = 0; i < b.mixer_after.size(); ++i) {
      b.mixers.push_back(add_patch_mixer(ps, "bb.mixer." + std::to_string(i) + ".", cfg, seed));
    }
  }
  b.final_norm_g = add_fill(ps, "bb.norm_f_g", {cfg.F}, 1.0);
  b.final_norm_b = add_zeros(ps, "bb.norm_f_b", {cfg.F});
  return b;
}

HeadLayer add_head(ParameterSet& ps, const ModelConfig& cfg, std::uint64_t seed) {
  const std::size_t in = cfg.F * cfg.patch_count(), out = 2 * cfg.K * cfg.L;
  HeadLayer h{};
  h.w = add_linear_w(ps, "head.w", out, in, seed);
  h.b = add_zeros(ps, "head.b", {out});
  return h;
}

// ---------------------------------------------------------------- lookup

namespace {

TokenMixerLayer find_token_mixer(const ParameterSet& ps, const std::string& pre) {
  return {ps.index(pre + "conv1_w"), ps.index(pre + "conv1_b"), ps.index(pre + "conv2_w"),
          ps.index(pre + "conv2_b"), ps.index(pre + "fc1_w"),   ps.index(pre + "fc1_b"),
          ps.index(pre + "fc2_w"),   ps.index(pre + "fc2_b")};
}

SsmLayer find_ssm(const ParameterSet& ps, const std::string& pre) {
  return {ps.index(pre + "norm_g"),  ps.index(pre + "norm_b"), ps.index(pre + "w_in"),
          ps.index(pre + "w_gate"),  ps.index(pre + "conv_w"), ps.index(pre + "conv_b"),
          ps.index(pre + "w_delta"), ps.index(pre + "b_delta"), ps.index(pre + "w_b"),
          ps.index(pre + "w_c"),     ps.index(pre + "a_log"),  ps.index(pre + "d_skip"),
          ps.index(pre + "w_out")};
}

MixerLayer find_mixer(const ParameterSet& ps, const std::string& pre) {
  return {ps.index(pre + "norm_g"), ps.index(pre + "norm_b"), ps.index(pre + "w_q"),
          ps.index(pre + "w_k"),    ps.index(pre + "w_v"),    ps.index(pre + "w_o")};
}

FeedForwardLayer find_ff(const ParameterSet& ps, const std::string& pre) {
  return {ps.index(pre + "norm_g"), ps.index(pre + "norm_b"), ps.index(pre + "w1"),
          ps.index(pre + "b1"),     ps.index(pre + "w2"),     ps.index(pre + "b2")};
}

}  // namespace

TokenizerLayers find_tokenizer(const ParameterSet& ps, const ModelConfig& cfg) {
  TokenizerLayers t;
  for (std::size_t i = 0; i < cfg.n_mixer_cascade; ++i) {
    t.freq.push_back(find_token_mixer(ps, "tok.freq." + std::to_string(i) + "."));
    t.delay.push_back(find_token_mixer(ps, "tok.delay." + std::to_string(i) + "."));
  }
  t.proj_w = ps.index("tok.proj_w");
  t.proj_b = ps.index("tok.proj_b");
  return t;
}

BackboneLayers find_backbone(const ParameterSet& ps, const ModelConfig& cfg) {
  BackboneLayers b;
  b.variant = cfg.variant;
  b.heads = cfg.heads;
  if (cfg.variant == Variant::FullAttention) {
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      b.attn.push_back(find_mixer(ps, "bb.attn." + std::to_string(i) + "."));
      b.ff.push_back(find_ff(ps, "bb.ff." + std::to_string(i) + "."));
    }
  } else {
    for (std::size_t i = 0; i < cfg.layers; ++i) {
      b.ssm.push_back(find_ssm(ps, "bb.ssm." + std::to_string(i) + "."));
    }
    b.mixer_after = cfg.mixer_positions();
    for (std::size_t i = 0; i < b.mixer_after.size(); ++i) {
      b.mixers.push_back(find_mixer(ps, "bb.mixer." + std::to_string(i) + "."));
    }
  }
  b.final_norm_g = ps.index("bb.norm_f_g");
  b.final_norm_b = ps.index("bb.norm_f_b");
  return b;
}

HeadLayer find_head(const ParameterSet& ps) { return {ps.index("head.w"), ps.index("head.b")}; }

// ---------------------------------------------------------------- forward

namespace {

// [P' x 1 x 2K x N] layout version of one token mixer block.
ad::Var token_mixer_planes(const Bound& p, const TokenMixerLayer& l, const ad::Var& x4) {
  using namespace ad;
  auto h = relu(conv2d(x4, p[l.conv1_w], p[l.conv1_b]));
  auto feat = conv2d(h, p[l.conv2_w], p[l.conv2_b]);
  if (p[l.fc2_w].dim(0) != x4.dim(0)) {
    throw InvalidArgument("token mixer: gate width " + std::to_string(p[l.fc2_w].dim(0)) +
                          " does not match patch count " + std::to_string(x4.dim(0)));
  }
  auto pooled = mean_slices(feat);
  auto gate = sigmoid(linear(p[l.fc2_w], relu(linear(p[l.fc1_w], pooled, p[l.fc1_b])), p[l.fc2_b]));
  return add(scale_slices(feat, gate), x4);
}

ad::Var to_planes(const ad::Var& x) {
  // [2K x N x P'] -> [P' x 1 x 2K x N]
  const std::size_t R = x.dim(0), N = x.dim(1), Pp = x.dim(2);
  return ad::reshape(ad::permute3(x, {2, 0, 1}), {Pp, 1, R, N});
}

ad::Var from_planes(const ad::Var& x4) {
  const std::size_t Pp = x4.dim(0), R = x4.dim(2), N = x4.dim(3);
  return ad::permute3(ad::reshape(x4, {Pp, R, N}), {1, 2, 0});
}

}  // namespace

ad::Var token_mixer_forward(const Bound& p, const TokenMixerLayer& layer, const ad::Var& x) {
  if (x.value().rank() != 3) throw InvalidArgument("token mixer: expected [2K x N x P']");
  return from_planes(token_mixer_planes(p, layer, to_planes(x)));
}

Tensor positional_encoding(std::size_t F, std::size_t n_tokens) {
  Tensor pe({F, n_tokens});
  for (std::size_t i = 0; i < F; ++i) {
    const double expo = static_cast<double>(i % 2 == 0 ? i : i - 1) / static_cast<double>(F);
    const double denom = std::pow(10000.0, expo);
    for (std::size_t j = 0; j < n_tokens; ++j) {
      const double arg = static_cast<double>(j) / denom;
      pe.at(i, j) = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
  }
  return pe;
}

ad::Var tokenize(const Bound& p, const TokenizerLayers& layers, const Tensor& x_f_p,
                 const Tensor& x_tau_p) {
  using namespace ad;
  if (x_f_p.shape() != x_tau_p.shape() || x_f_p.rank() != 3) {
    throw InvalidArgument("tokenize: branch tensors must share a [2K x N x P'] shape");
  }
  auto f = to_planes(Var::view(x_f_p));
  for (const auto& l : layers.freq) f = token_mixer_planes(p, l, f);
  auto t = to_planes(Var::view(x_tau_p));
  for (const auto& l : layers.delay) t = token_mixer_planes(p, l, t);
  auto mixed = from_planes(add(f, t));  // [2K x N x P']
  const std::size_t rows = x_f_p.dim(0) * x_f_p.dim(1), Pp = x_f_p.dim(2);
  auto tok = linear(p[layers.proj_w], reshape(mixed, {rows, Pp}), p[layers.proj_b]);
  return add(tok, Var::leaf(positional_encoding(tok.dim(0), Pp)));
}

ad::Var ssm_block_forward(const Bound& p, const SsmLayer& l, const ad::Var& x) {
  using namespace ad;
  auto xn = layer_norm_cols(x, p[l.norm_g], p[l.norm_b]);
  auto u = linear(p[l.w_in], xn);
  auto z = linear(p[l.w_gate], xn);
  auto uc = silu(causal_depthwise_conv(u, p[l.conv_w], p[l.conv_b]));
  auto delta = softplus(affine_rows(uc, p[l.w_delta], p[l.b_delta]));
  auto b = linear(p[l.w_b], uc);
  auto c = linear(p[l.w_c], uc);
  auto a = affine(exp(p[l.a_log]), -1.0);
  auto y = selective_scan(uc, delta, a, b, c, p[l.d_skip]);
  return add(x, linear(p[l.w_out], mul(y, silu(z))));
}

ad::Var patch_mixer_forward(const Bound& p, const MixerLayer& l, std::size_t heads,
                            const ad::Var& x) {
  using namespace ad;
  const std::size_t F = x.dim(0);
  if (heads == 0 || F % heads != 0) {
    throw InvalidArgument("patch mixer: head count must divide the embedding width");
  }
  const std::size_t dh = F / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  auto xn = layer_norm_cols(x, p[l.norm_g], p[l.norm_b]);
  auto q = linear(p[l.w_q], xn);
  auto k = linear(p[l.w_k], xn);
  auto v = linear(p[l.w_v], xn);
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_rows(q, h * dh, (h + 1) * dh);
    auto kh = slice_rows(k, h * dh, (h + 1) * dh);
    auto vh = slice_rows(v, h * dh, (h + 1) * dh);
    // weights[i, j]: token i attending to token j
    auto weights = softmax_rows(affine(matmul_tn(qh, kh), scale));
    outs.push_back(matmul_nt(vh, weights));
  }
  return linear(p[l.w_o], concat_rows(outs));
}

ad::Var feed_forward(const Bound& p, const FeedForwardLayer& l, const ad::Var& x) {
  using namespace ad;
  auto xn = layer_norm_cols(x, p[l.norm_g], p[l.norm_b]);
  return linear(p[l.w2], relu(linear(p[l.w1], xn, p[l.b1])), p[l.b2]);
}

ad::Var backbone_forward(const Bound& p, const BackboneLayers& layers, const ad::Var& x_emb) {
  using namespace ad;
  Var x = x_emb;
  if (layers.variant == Variant::FullAttention) {
    for (std::size_t i = 0; i < layers.attn.size(); ++i) {
      x = add(x, patch_mixer_forward(p, layers.attn[i], layers.heads, x));
      x = add(x, feed_forward(p, layers.ff[i], x));
    }
  } else {
    std::size_t next_mixer = 0;
    for (std::size_t i = 0; i < layers.ssm.size(); ++i) {
      x = ssm_block_forward(p, layers.ssm[i], x);
      if (next_mixer < layers.mixer_after.size() && layers.mixer_after[next_mixer] == i + 1) {
        x = add(x, patch_mixer_forward(p, layers.mixers[next_mixer], layers.heads, x));
        ++next_mixer;
      }
    }
  }
  return layer_norm_cols(x, p[layers.final_norm_g], p[layers.final_norm_b]);
}

ad::Var head_project(const Bound& p, const HeadLayer& head, const ad::Var& x_seq, std::size_t K,
                     std::size_t L) {
  using namespace ad;
  const auto& w = p[head.w];
  if (w.dim(1) != x_seq.numel() || w.dim(0) != 2 * K * L) {
    throw InvalidArgument("head_project: weight " + shape_string(w.shape()) + " cannot map " +
                          shape_string(x_seq.shape()) + " to [" + std::to_string(2 * K) + " x " +
                          std::to_string(L) + "]");
  }
  auto flat = reshape(x_seq, {x_seq.numel()});
  return reshape(linear(w, flat, p[head.b]), {2 * K, L});
}

}  // namespace mcsp::model
