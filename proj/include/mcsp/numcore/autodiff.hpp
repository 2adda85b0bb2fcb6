// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over a dynamically recorded graph.
//
// Every op returns a Var whose node remembers its inputs and a backward
// closure, but only when at least one input requires a gradient; otherwise the
// op is a plain forward computation and intermediates die with their handles.
// A graph is owned by the Vars that reference it and must stay on one thread.

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "mcsp/numcore/tensor.hpp"

namespace mcsp::ad {

struct Node {
  Tensor value;
  const Tensor* external = nullptr;  // leaves may view caller-owned storage
  Tensor grad;                       // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  const Tensor& val() const noexcept { return external ? *external : value; }
  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// Leaf that owns its value.
  static Var leaf(Tensor value, bool requires_grad = false);
  /// Leaf viewing `value`, which must outlive the graph.
  static Var view(const Tensor& value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->val(); }
  const Shape& shape() const { return node_->val().shape(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t numel() const { return node_->val().numel(); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }

  /// Accumulated gradient; a zero tensor of matching shape when none flowed.
  Tensor grad() const;
  bool has_grad() const noexcept { return node_ && !node_->grad.empty(); }

  /// Seeds d(this)/d(this) = 1 (this must hold one element) and propagates.
  void backward() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// scale * a + shift
Var affine(const Var& a, double scale, double shift = 0.0);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var silu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);

/// Sum of all elements, shape [1].
Var sum(const Var& a);

/// W [O x I] times x [I x T] (or x [I]) plus optional bias [O] broadcast
/// along columns.
Var linear(const Var& w, const Var& x, const Var& bias = Var());
/// a^T b with a [K x M], b [K x N].
Var matmul_tn(const Var& a, const Var& b);
/// a b^T with a [M x K], b [N x K].
Var matmul_nt(const Var& a, const Var& b);

/// Row-wise softmax of a 2-D tensor.
Var softmax_rows(const Var& a);

/// Normalises each column of x [F x T] over F, then gamma[f] * xn + beta[f].
Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);

/// x [R x C]: x[r, c] * w[r] + b[r].
Var affine_rows(const Var& x, const Var& w, const Var& b);

/// Same-padded 2-D convolution: x [B x Cin x H x W], w [Cout x Cin x KH x KW],
/// bias [Cout].
Var conv2d(const Var& x, const Var& w, const Var& bias);

/// Depthwise causal convolution along columns: x [E x T], w [E x W], b [E].
/// y[e, t] = b[e] + sum_j w[e, j] * x[e, t - (W - 1) + j], zero before t = 0.
Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b);

/// x [B x ...] times g [B] broadcast over each leading slice.
Var scale_slices(const Var& x, const Var& g);
/// Mean over each leading slice: [B x ...] -> [B].
Var mean_slices(const Var& x);

Var reshape(const Var& x, Shape shape);
/// Axis permutation of a rank-3 tensor: out.dim(i) = x.dim(perm[i]).
Var permute3(const Var& x, std::array<std::size_t, 3> perm);
/// Rows [r0, r1) of a 2-D tensor.
Var slice_rows(const Var& x, std::size_t r0, std::size_t r1);
Var concat_rows(const std::vector<Var>& parts);

/// Selective state-space scan, see kernels::ScanInputs for layouts.
/// u, delta: [E x T]; a: [E x S]; b, c: [S x T]; d: [E]. Returns y [E x T].
Var selective_scan(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c,
                   const Var& d);

}  // namespace mcsp::ad
