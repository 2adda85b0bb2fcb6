// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcsp/numcore/autodiff.hpp"
#include "mcsp/numcore/rng.hpp"
#include "mcsp/numcore/tensor.hpp"

namespace mcsp::model {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Ordered, named parameter storage. Indices are stable once added.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const noexcept { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index(const std::string& name) const;

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& value(const std::string& name) { return params_[index(name)].value; }
  const Tensor& value(const std::string& name) const { return params_[index(name)].value; }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  std::size_t scalar_count() const noexcept;
  /// Rounds every value through float, matching what a checkpoint stores.
  void round_to_f32();

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-forward view of a ParameterSet as autodiff leaves. With
/// `with_grad`, trainable parameters record gradients.
class Bound {
 public:
  Bound(const ParameterSet& params, bool with_grad);
  const ad::Var& operator[](std::size_t i) const { return vars_[i]; }
  std::size_t size() const noexcept { return vars_.size(); }
  /// Substitutes one leaf, e.g. a probe for gradient checks.
  void set(std::size_t i, ad::Var v) { vars_.at(i) = std::move(v); }

 private:
  std::vector<ad::Var> vars_;
};

// Initialisers. Each draws from its own named stream so a parameter's
// initial value depends only on (seed, name).
Tensor init_uniform(const Shape& shape, double bound, std::uint64_t seed, const std::string& name);

}  // namespace mcsp::model
