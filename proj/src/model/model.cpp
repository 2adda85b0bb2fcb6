// SPDX-License-Identifier: Apache-2.0
#include "mcsp/model/model.hpp"

#include <string>

#include "mcsp/error.hpp"

namespace mcsp::model {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Hybrid: return "hybrid";
    case Variant::PlainSsm: return "plain-ssm";
    case Variant::FullAttention: return "full-attention";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "hybrid") return Variant::Hybrid;
  if (s == "plain-ssm") return Variant::PlainSsm;
  if (s == "full-attention") return Variant::FullAttention;
  throw InvalidArgument("unknown variant '" + s + "' (hybrid | plain-ssm | full-attention)");
}

namespace {

std::string freeze_name(FreezePolicy f) { return f == FreezePolicy::Core ? "core" : "none"; }

FreezePolicy parse_freeze(const std::string& s) {
  if (s == "none") return FreezePolicy::None;
  if (s == "core") return FreezePolicy::Core;
  throw InvalidArgument("unknown freeze policy '" + s + "'");
}

}  // namespace

std::vector<std::size_t> ModelConfig::mixer_positions() const {
  std::vector<std::size_t> out;
  if (variant != Variant::Hybrid || interval == 0) return out;
  for (std::size_t b = interval; b <= layers; b += interval) out.push_back(b);
  return out;
}

void ModelConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument("model config: " + msg);
  };
  need(K >= 1 && P >= 1 && L >= 1, "K, P and L must be positive");
  need(patch_size >= 1 && patch_size <= P, "patch size must be in [1, P]");
  need(n_mixer_cascade >= 1, "token mixer cascade depth must be positive");
  need(conv_channels >= 1 && conv_kernel % 2 == 1, "conv kernel must be odd");
  need(gate_reduction >= 1, "gate reduction must be positive");
  need(F >= 2 && layers >= 1, "F >= 2 and at least one layer required");
  need(heads >= 1 && F % heads == 0, "head count must divide F");
  need(state >= 1 && expand >= 1 && ssm_conv_width >= 1 && ff_mult >= 1,
       "state, expand, conv width and ff width must be positive");
  need(variant != Variant::Hybrid || interval >= 1, "hybrid requires interval >= 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"K", c.K},
          {"P", c.P},
          {"L", c.L},
          {"patch_size", c.patch_size},
          {"n_mixer_cascade", c.n_mixer_cascade},
          {"conv_channels", c.conv_channels},
          {"conv_kernel", c.conv_kernel},
          {"gate_reduction", c.gate_reduction},
          {"F", c.F},
          {"layers", c.layers},
          {"interval", c.interval},
          {"heads", c.heads},
          {"state", c.state},
          {"expand", c.expand},
          {"ssm_conv_width", c.ssm_conv_width},
          {"ff_mult", c.ff_mult},
          {"freeze", freeze_name(c.freeze)}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
  ModelConfig c;
  auto get = [&](const char* key, std::size_t& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::size_t>();
  };
  try {
    if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
    get("K", c.K);
    get("P", c.P);
    get("L", c.L);
    get("patch_size", c.patch_size);
    get("n_mixer_cascade", c.n_mixer_cascade);
    get("conv_channels", c.conv_channels);
    get("conv_kernel", c.conv_kernel);
    get("gate_reduction", c.gate_reduction);
    get("F", c.F);
    get("layers", c.layers);
    get("interval", c.interval);
    get("heads", c.heads);
    get("state", c.state);
    get("expand", c.expand);
    get("ssm_conv_width", c.ssm_conv_width);
    get("ff_mult", c.ff_mult);
    if (j.contains("freeze")) c.freeze = parse_freeze(j.at("freeze").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("model config: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------- Model

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  tokenizer_ = add_tokenizer(params_, cfg_, seed);
  backbone_ = add_backbone(params_, cfg_, seed);
  head_ = add_head(params_, cfg_, seed);
  apply_freeze_policy();
}

Model::Model(ModelConfig cfg, ParameterSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  const Model reference(cfg_, 0);
  if (reference.params().size() != params_.size()) {
    throw InvalidArgument("parameter count " + std::to_string(params_.size()) +
                          " does not match config (" +
                          std::to_string(reference.params().size()) + ")");
  }
  for (const auto& ref : reference.params()) {
    if (!params_.contains(ref.name)) throw InvalidArgument("missing parameter '" + ref.name + "'");
    const auto& got = params_.value(ref.name);
    if (got.shape() != ref.value.shape()) {
      throw InvalidArgument("parameter '" + ref.name + "' has shape " + shape_string(got.shape()) +
                            ", expected " + shape_string(ref.value.shape()));
    }
  }
  bind_layers();
}

void Model::bind_layers() {
  tokenizer_ = find_tokenizer(params_, cfg_);
  backbone_ = find_backbone(params_, cfg_);
  head_ = find_head(params_);
}

void Model::apply_freeze_policy() {
  for (auto& p : params_) {
    const bool backbone = p.name.rfind("bb.", 0) == 0;
    const bool norm = p.name.find("norm") != std::string::npos;
    p.trainable = cfg_.freeze == FreezePolicy::None || !backbone || norm;
  }
}

ad::Var Model::forward(const Bound& bound, const pipeline::PatchedInput& in) const {
  if (in.x_f_p.rank() != 3 || in.x_f_p.dim(0) != 2 * cfg_.K || in.x_f_p.dim(1) != cfg_.patch_size ||
      in.x_f_p.dim(2) != cfg_.patch_count()) {
    throw InvalidArgument("model input " + shape_string(in.x_f_p.shape()) + " does not match config");
  }
  auto emb = tokenize(bound, tokenizer_, in.x_f_p, in.x_tau_p);
  auto seq = backbone_forward(bound, backbone_, emb);
  return head_project(bound, head_, seq, cfg_.K, cfg_.L);
}

ComplexMatrix Model::predict(const ComplexMatrix& ul_history) const {
  if (ul_history.rows() != cfg_.K || ul_history.cols() != cfg_.P) {
    throw InvalidArgument("history grid must be " + std::to_string(cfg_.K) + " x " +
                          std::to_string(cfg_.P));
  }
  const auto in = pipeline::preprocess(ul_history, cfg_.patch_size);
  const Bound bound(params_, false);
  const auto x_hat = forward(bound, in);
  return pipeline::finalize_prediction(x_hat.value(), in.norm_f);
}

}  // namespace mcsp::model
