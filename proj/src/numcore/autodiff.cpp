// SPDX-License-Identifier: Apache-2.0
#include "mcsp/numcore/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mcsp/error.hpp"
#include "mcsp/numcore/kernels.hpp"

namespace mcsp::ad {

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(val().shape(), 0.0);
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Var Var::view(const Tensor& value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->external = &value;
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

Tensor Var::grad() const {
  if (!node_) return Tensor();
  if (node_->grad.empty()) return Tensor(shape(), 0.0);
  return node_->grad;
}

void Var::backward() const {
  if (!node_) throw UsageError("backward on an undefined Var");
  if (numel() != 1) throw UsageError("backward needs a single-element output");
  if (!node_->requires_grad) return;

  // Post-order DFS gives a topological order; walk it in reverse.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {

using Fn = std::function<void(Node&)>;

Var make(Tensor value, std::initializer_list<Var> inputs, Fn backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& v : inputs) {
    if (v.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    n->inputs.reserve(inputs.size());
    for (const auto& v : inputs) n->inputs.push_back(v.node_ptr());
    n->backward = std::move(backward);
  }
  return Var(std::move(n));
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }
bool wants(Node& self, std::size_t i) {
  return self.inputs[i] && self.inputs[i]->requires_grad;
}

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                          " vs " + shape_string(b.shape()));
  }
}

template <class F, class D>
Var unary(const Var& a, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = f(x[i]);
  return make(std::move(y), {a}, [dfdx](Node& self) {
    Node& xa = in(self, 0);
    const Tensor& x = xa.val();
    Tensor& gx = xa.grad_buffer();
    for (std::size_t i = 0; i < x.numel(); ++i) gx[i] += self.grad[i] * dfdx(x[i], self.value[i]);
  });
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  // log(1 + e^x) without overflow.
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return make(std::move(y), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!wants(self, k)) continue;
      Tensor& g = in(self, k).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  return make(std::move(y), {a, b}, [](Node& self) {
    if (wants(self, 0)) {
      Tensor& g = in(self, 0).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      Tensor& g = in(self, 1).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  return make(std::move(y), {a, b}, [](Node& self) {
    const Tensor& av = in(self, 0).val();
    const Tensor& bv = in(self, 1).val();
    if (wants(self, 0)) {
      Tensor& g = in(self, 0).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (wants(self, 1)) {
      Tensor& g = in(self, 1).grad_buffer();
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var affine(const Var& a, double scale, double shift) {
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = scale * y[i] + shift;
  return make(std::move(y), {a}, [scale](Node& self) {
    Tensor& g = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += scale * self.grad[i];
  });
}

Var relu(const Var& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Var silu(const Var& a) {
  return unary(
      a, [](double x) { return x * sigmoid_scalar(x); },
      [](double x, double) {
        const double s = sigmoid_scalar(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var softplus(const Var& a) {
  return unary(a, softplus_scalar, [](double x, double) { return sigmoid_scalar(x); });
}

Var exp(const Var& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make(Tensor({1}, s), {a}, [](Node& self) {
    Tensor& g = in(self, 0).grad_buffer();
    const double gs = self.grad[0];
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += gs;
  });
}

Var linear(const Var& w, const Var& x, const Var& bias) {
  if (w.value().rank() != 2) throw InvalidArgument("linear: weight must be 2-D");
  const std::size_t O = w.dim(0), I = w.dim(1);
  const bool vec = x.value().rank() == 1;
  if (x.dim(0) != I || (!vec && x.value().rank() != 2)) {
    throw InvalidArgument("linear: weight " + shape_string(w.shape()) + " cannot apply to " +
                          shape_string(x.shape()));
  }
  const std::size_t T = vec ? 1 : x.dim(1);
  if (bias.defined() && bias.shape() != Shape{O}) {
    throw InvalidArgument("linear: bias must be [" + std::to_string(O) + "]");
  }
  Tensor y(vec ? Shape{O} : Shape{O, T});
  if (bias.defined()) {
    const Tensor& bv = bias.value();
    for (std::size_t o = 0; o < O; ++o) std::fill_n(y.ptr() + o * T, T, bv[o]);
  }
  kernels::matmul_nn(w.value().ptr(), x.value().ptr(), y.ptr(), O, I, T, bias.defined());
  auto fn = [O, I, T](Node& self) {
    const double* gy = self.grad.ptr();
    Node& wn = in(self, 0);
    Node& xn = in(self, 1);
    if (wn.requires_grad) kernels::matmul_nt(gy, xn.val().ptr(), wn.grad_buffer().ptr(), O, T, I, true);
    if (xn.requires_grad) kernels::matmul_tn(wn.val().ptr(), gy, xn.grad_buffer().ptr(), I, O, T, true);
    if (self.inputs.size() > 2 && wants(self, 2)) {
      Tensor& gb = in(self, 2).grad_buffer();
      for (std::size_t o = 0; o < O; ++o) {
        double s = 0.0;
        for (std::size_t t = 0; t < T; ++t) s += gy[o * T + t];
        gb[o] += s;
      }
    }
  };
  if (bias.defined()) return make(std::move(y), {w, x, bias}, fn);
  return make(std::move(y), {w, x}, fn);
}

Var matmul_tn(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(0) != b.dim(0)) {
    throw InvalidArgument("matmul_tn: incompatible " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  }
  const std::size_t K = a.dim(0), M = a.dim(1), N = b.dim(1);
  Tensor y({M, N});
  kernels::matmul_tn(a.value().ptr(), b.value().ptr(), y.ptr(), M, K, N, false);
  return make(std::move(y), {a, b}, [K, M, N](Node& self) {
    Node& an = in(self, 0);
    Node& bn = in(self, 1);
    const double* gy = self.grad.ptr();
    // y = a^T b: da = b gy^T (K x M), db = a gy (K x N)
    if (an.requires_grad) kernels::matmul_nt(bn.val().ptr(), gy, an.grad_buffer().ptr(), K, N, M, true);
    if (bn.requires_grad) kernels::matmul_nn(an.val().ptr(), gy, bn.grad_buffer().ptr(), K, M, N, true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.value().rank() != 2 || b.value().rank() != 2 || a.dim(1) != b.dim(1)) {
    throw InvalidArgument("matmul_nt: incompatible " + shape_string(a.shape()) + " and " +
                          shape_string(b.shape()));
  }
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(0);
  Tensor y({M, N});
  kernels::matmul_nt(a.value().ptr(), b.value().ptr(), y.ptr(), M, K, N, false);
  return make(std::move(y), {a, b}, [K, M, N](Node& self) {
    Node& an = in(self, 0);
    Node& bn = in(self, 1);
    const double* gy = self.grad.ptr();
    // y = a b^T: da = gy b (M x K), db = gy^T a (N x K)
    if (an.requires_grad) kernels::matmul_nn(gy, bn.val().ptr(), an.grad_buffer().ptr(), M, N, K, true);
    if (bn.requires_grad) kernels::matmul_tn(gy, an.val().ptr(), bn.grad_buffer().ptr(), N, M, K, true);
  });
}

Var softmax_rows(const Var& a) {
  if (a.value().rank() != 2) throw InvalidArgument("softmax_rows: input must be 2-D");
  if (!a.value().all_finite()) throw NumericFailure("softmax_rows: non-finite input");
  const std::size_t R = a.dim(0), C = a.dim(1);
  Tensor y(a.shape());
  kernels::softmax_rows(a.value().ptr(), y.ptr(), R, C);
  return make(std::move(y), {a}, [R, C](Node& self) {
    Tensor& g = in(self, 0).grad_buffer();
    for (std::size_t r = 0; r < R; ++r) {
      const double* yr = self.value.ptr() + r * C;
      const double* gr = self.grad.ptr() + r * C;
      double dot = 0.0;
      for (std::size_t j = 0; j < C; ++j) dot += gr[j] * yr[j];
      for (std::size_t j = 0; j < C; ++j) g[r * C + j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var layer_norm_cols(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x.value().rank() != 2) throw InvalidArgument("layer_norm_cols: input must be 2-D");
  const std::size_t F = x.dim(0), T = x.dim(1);
  if (gamma.shape() != Shape{F} || beta.shape() != Shape{F}) {
    throw InvalidArgument("layer_norm_cols: gamma/beta must be [F]");
  }
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y({F, T});
  Tensor xhat({F, T});
  Tensor rstd({T});
  for (std::size_t t = 0; t < T; ++t) {
    double mean = 0.0;
    for (std::size_t f = 0; f < F; ++f) mean += xv[f * T + t];
    mean /= static_cast<double>(F);
    double var = 0.0;
    for (std::size_t f = 0; f < F; ++f) {
      const double d = xv[f * T + t] - mean;
      var += d * d;
    }
    var /= static_cast<double>(F);
    const double rs = 1.0 / std::sqrt(var + eps);
    rstd[t] = rs;
    for (std::size_t f = 0; f < F; ++f) {
      const double xh = (xv[f * T + t] - mean) * rs;
      xhat[f * T + t] = xh;
      y[f * T + t] = gv[f] * xh + bv[f];
    }
  }
  return make(std::move(y), {x, gamma, beta},
              [F, T, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                const Tensor& gv = in(self, 1).val();
                const double* gy = self.grad.ptr();
                if (wants(self, 1)) {
                  Tensor& gg = in(self, 1).grad_buffer();
                  for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t t = 0; t < T; ++t) gg[f] += gy[f * T + t] * xhat[f * T + t];
                }
                if (wants(self, 2)) {
                  Tensor& gb = in(self, 2).grad_buffer();
                  for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t t = 0; t < T; ++t) gb[f] += gy[f * T + t];
                }
                if (wants(self, 0)) {
                  Tensor& gx = in(self, 0).grad_buffer();
                  const double invF = 1.0 / static_cast<double>(F);
                  for (std::size_t t = 0; t < T; ++t) {
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t f = 0; f < F; ++f) {
                      const double gxh = gy[f * T + t] * gv[f];
                      m1 += gxh;
                      m2 += gxh * xhat[f * T + t];
                    }
                    m1 *= invF;
                    m2 *= invF;
                    for (std::size_t f = 0; f < F; ++f) {
                      const double gxh = gy[f * T + t] * gv[f];
                      gx[f * T + t] += rstd[t] * (gxh - m1 - xhat[f * T + t] * m2);
                    }
                  }
                }
              });
}

Var affine_rows(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 2) throw InvalidArgument("affine_rows: input must be 2-D");
  const std::size_t R = x.dim(0), C = x.dim(1);
  if (w.shape() != Shape{R} || b.shape() != Shape{R}) {
    throw InvalidArgument("affine_rows: w/b must be [rows]");
  }
  const Tensor& xv = x.value();
  Tensor y({R, C});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) y[r * C + c] = xv[r * C + c] * w.value()[r] + b.value()[r];
  return make(std::move(y), {x, w, b}, [R, C](Node& self) {
    const Tensor& xv = in(self, 0).val();
    const Tensor& wv = in(self, 1).val();
    const double* gy = self.grad.ptr();
    if (wants(self, 0)) {
      Tensor& gx = in(self, 0).grad_buffer();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += gy[r * C + c] * wv[r];
    }
    if (wants(self, 1)) {
      Tensor& gw = in(self, 1).grad_buffer();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gw[r] += gy[r * C + c] * xv[r * C + c];
    }
    if (wants(self, 2)) {
      Tensor& gb = in(self, 2).grad_buffer();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) gb[r] += gy[r * C + c];
    }
  });
}

Var conv2d(const Var& x, const Var& w, const Var& bias) {
  if (x.value().rank() != 4 || w.value().rank() != 4) {
    throw InvalidArgument("conv2d: input and kernel must be 4-D");
  }
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Cout = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != Cin || KH % 2 == 0 || KW % 2 == 0) {
    throw InvalidArgument("conv2d: kernel " + shape_string(w.shape()) +
                          " incompatible with input " + shape_string(x.shape()));
  }
  if (bias.shape() != Shape{Cout}) throw InvalidArgument("conv2d: bias must be [Cout]");
  Tensor y({B, Cout, H, W});
  kernels::conv2d(x.value().ptr(), w.value().ptr(), bias.value().ptr(), y.ptr(), B, Cin, Cout, H,
                  W, KH, KW);
  return make(std::move(y), {x, w, bias}, [B, Cin, Cout, H, W, KH, KW](Node& self) {
    const Tensor& xv = in(self, 0).val();
    const Tensor& wv = in(self, 1).val();
    const double* gy = self.grad.ptr();
    const bool gx_on = wants(self, 0), gw_on = wants(self, 1);
    double* gx = gx_on ? in(self, 0).grad_buffer().ptr() : nullptr;
    double* gw = gw_on ? in(self, 1).grad_buffer().ptr() : nullptr;
    if (wants(self, 2)) {
      Tensor& gb = in(self, 2).grad_buffer();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t co = 0; co < Cout; ++co) {
          const double* g = gy + (b * Cout + co) * H * W;
          double s = 0.0;
          for (std::size_t i = 0; i < H * W; ++i) s += g[i];
          gb[co] += s;
        }
    }
    if (!gx_on && !gw_on) return;
    const auto ph = static_cast<std::ptrdiff_t>(KH / 2), pw = static_cast<std::ptrdiff_t>(KW / 2);
    const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const double* g = gy + (b * Cout + co) * H * W;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const double* xp = xv.ptr() + (b * Cin + ci) * H * W;
          double* gxp = gx ? gx + (b * Cin + ci) * H * W : nullptr;
          for (std::size_t di = 0; di < KH; ++di) {
            for (std::size_t dj = 0; dj < KW; ++dj) {
              const std::size_t widx = ((co * Cin + ci) * KH + di) * KW + dj;
              const double wval = wv[widx];
              const std::ptrdiff_t oi = static_cast<std::ptrdiff_t>(di) - ph;
              const std::ptrdiff_t oj = static_cast<std::ptrdiff_t>(dj) - pw;
              const std::ptrdiff_t i0 = std::max<std::ptrdiff_t>(0, -oi);
              const std::ptrdiff_t i1 = std::min<std::ptrdiff_t>(Hs, Hs - oi);
              const std::ptrdiff_t j0 = std::max<std::ptrdiff_t>(0, -oj);
              const std::ptrdiff_t j1 = std::min<std::ptrdiff_t>(Ws, Ws - oj);
              double acc = 0.0;
              for (std::ptrdiff_t i = i0; i < i1; ++i) {
                const double* gr = g + i * Ws;
                const std::ptrdiff_t src = (i + oi) * Ws + oj;
                for (std::ptrdiff_t j = j0; j < j1; ++j) {
                  acc += gr[j] * xp[src + j];
                  if (gxp) gxp[src + j] += gr[j] * wval;
                }
              }
              if (gw) gw[widx] += acc;
            }
          }
        }
      }
    }
  });
}

Var causal_depthwise_conv(const Var& x, const Var& w, const Var& b) {
  if (x.value().rank() != 2 || w.value().rank() != 2) {
    throw InvalidArgument("causal_depthwise_conv: x and w must be 2-D");
  }
  const std::size_t E = x.dim(0), T = x.dim(1), K = w.dim(1);
  if (w.dim(0) != E || b.shape() != Shape{E}) {
    throw InvalidArgument("causal_depthwise_conv: weights must be [E x W], bias [E]");
  }
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  Tensor y({E, T});
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t t = 0; t < T; ++t) {
      double s = b.value()[e];
      for (std::size_t j = 0; j < K; ++j) {
        // tap j looks back K-1-j steps
        const std::size_t back = K - 1 - j;
        if (t >= back) s += wv[e * K + j] * xv[e * T + t - back];
      }
      y[e * T + t] = s;
    }
  }
  return make(std::move(y), {x, w, b}, [E, T, K](Node& self) {
    const Tensor& xv = in(self, 0).val();
    const Tensor& wv = in(self, 1).val();
    const double* gy = self.grad.ptr();
    double* gx = wants(self, 0) ? in(self, 0).grad_buffer().ptr() : nullptr;
    double* gw = wants(self, 1) ? in(self, 1).grad_buffer().ptr() : nullptr;
    double* gb = wants(self, 2) ? in(self, 2).grad_buffer().ptr() : nullptr;
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t t = 0; t < T; ++t) {
        const double g = gy[e * T + t];
        if (gb) gb[e] += g;
        for (std::size_t j = 0; j < K; ++j) {
          const std::size_t back = K - 1 - j;
          if (t < back) continue;
          if (gw) gw[e * K + j] += g * xv[e * T + t - back];
          if (gx) gx[e * T + t - back] += g * wv[e * K + j];
        }
      }
    }
  });
}

Var scale_slices(const Var& x, const Var& g) {
  const std::size_t B = x.dim(0);
  if (g.shape() != Shape{B}) throw InvalidArgument("scale_slices: gate must be [B]");
  const std::size_t inner = x.numel() / B;
  Tensor y = x.value();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < inner; ++i) y[b * inner + i] *= g.value()[b];
  return make(std::move(y), {x, g}, [B, inner](Node& self) {
    const Tensor& xv = in(self, 0).val();
    const Tensor& gv = in(self, 1).val();
    if (wants(self, 0)) {
      Tensor& gx = in(self, 0).grad_buffer();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) gx[b * inner + i] += self.grad[b * inner + i] * gv[b];
    }
    if (wants(self, 1)) {
      Tensor& gg = in(self, 1).grad_buffer();
      for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += self.grad[b * inner + i] * xv[b * inner + i];
        gg[b] += s;
      }
    }
  });
}

Var mean_slices(const Var& x) {
  const std::size_t B = x.dim(0);
  const std::size_t inner = x.numel() / B;
  Tensor y({B});
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < inner; ++i) s += x.value()[b * inner + i];
    y[b] = s / static_cast<double>(inner);
  }
  return make(std::move(y), {x}, [B, inner](Node& self) {
    Tensor& gx = in(self, 0).grad_buffer();
    const double inv = 1.0 / static_cast<double>(inner);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < inner; ++i) gx[b * inner + i] += self.grad[b] * inv;
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return make(std::move(y), {x}, [](Node& self) {
    Tensor& gx = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i];
  });
}

Var permute3(const Var& x, std::array<std::size_t, 3> perm) {
  if (x.value().rank() != 3) throw InvalidArgument("permute3: input must be 3-D");
  std::array<std::size_t, 3> seen{};
  for (auto p : perm) {
    if (p > 2 || seen[p]++) throw InvalidArgument("permute3: not a permutation");
  }
  const Shape& s = x.shape();
  const Shape out_shape{s[perm[0]], s[perm[1]], s[perm[2]]};
  const std::array<std::size_t, 3> in_stride{s[1] * s[2], s[2], 1};
  const std::array<std::size_t, 3> st{in_stride[perm[0]], in_stride[perm[1]], in_stride[perm[2]]};
  // Map output linear index -> input linear index once; reused by backward.
  std::vector<std::size_t> src(x.numel());
  std::size_t o = 0;
  for (std::size_t i = 0; i < out_shape[0]; ++i)
    for (std::size_t j = 0; j < out_shape[1]; ++j)
      for (std::size_t k = 0; k < out_shape[2]; ++k) src[o++] = i * st[0] + j * st[1] + k * st[2];
  Tensor y(out_shape);
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < src.size(); ++i) y[i] = xv[src[i]];
  return make(std::move(y), {x}, [src = std::move(src)](Node& self) {
    Tensor& gx = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += self.grad[i];
  });
}

Var slice_rows(const Var& x, std::size_t r0, std::size_t r1) {
  if (x.value().rank() != 2 || r0 > r1 || r1 > x.dim(0)) {
    throw InvalidArgument("slice_rows: bad range for " + shape_string(x.shape()));
  }
  const std::size_t C = x.dim(1);
  Tensor y({r1 - r0, C}, std::span<const double>(x.value().ptr() + r0 * C, (r1 - r0) * C));
  return make(std::move(y), {x}, [r0, C](Node& self) {
    Tensor& gx = in(self, 0).grad_buffer();
    for (std::size_t i = 0; i < self.grad.numel(); ++i) gx[r0 * C + i] += self.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: nothing to concatenate");
  const std::size_t C = parts[0].dim(1);
  std::size_t R = 0;
  for (const auto& p : parts) {
    if (p.value().rank() != 2 || p.dim(1) != C) throw InvalidArgument("concat_rows: column mismatch");
    R += p.dim(0);
  }
  Tensor y({R, C});
  std::size_t off = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    std::copy(p.value().ptr(), p.value().ptr() + p.numel(), y.ptr() + off);
    off += p.numel();
    any_grad = any_grad || p.requires_grad();
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(y);
  if (any_grad) {
    n->requires_grad = true;
    for (const auto& p : parts) n->inputs.push_back(p.node_ptr());
    n->backward = [](Node& self) {
      std::size_t off = 0;
      for (auto& ip : self.inputs) {
        const std::size_t cnt = ip->val().numel();
        if (ip->requires_grad) {
          Tensor& g = ip->grad_buffer();
          for (std::size_t i = 0; i < cnt; ++i) g[i] += self.grad[off + i];
        }
        off += cnt;
      }
    };
  }
  return Var(std::move(n));
}

Var selective_scan(const Var& u, const Var& delta, const Var& a, const Var& b, const Var& c,
                   const Var& d) {
  if (u.value().rank() != 2) throw InvalidArgument("selective_scan: u must be [E x T]");
  const std::size_t E = u.dim(0), T = u.dim(1);
  if (a.value().rank() != 2 || a.dim(0) != E) throw InvalidArgument("selective_scan: a must be [E x S]");
  const std::size_t S = a.dim(1);
  if (delta.shape() != Shape{E, T} || b.shape() != Shape{S, T} || c.shape() != Shape{S, T} ||
      d.shape() != Shape{E}) {
    throw InvalidArgument("selective_scan: inconsistent operand shapes");
  }
  const kernels::ScanDims dims{E, S, T};
  const bool record = u.requires_grad() || delta.requires_grad() || a.requires_grad() ||
                      b.requires_grad() || c.requires_grad() || d.requires_grad();
  Tensor y({E, T});
  Tensor states = record ? Tensor({E, T, S}) : Tensor();
  const kernels::ScanInputs ins{u.value().ptr(), delta.value().ptr(), a.value().ptr(),
                                b.value().ptr(), c.value().ptr(), d.value().ptr()};
  kernels::selective_scan(ins, dims, y.ptr(), record ? states.ptr() : nullptr);
  if (!y.all_finite()) throw NumericFailure("selective_scan: non-finite output");
  return make(std::move(y), {u, delta, a, b, c, d}, [dims, states = std::move(states)](Node& self) {
    auto ptr = [&](std::size_t i) -> const double* { return in(self, i).val().ptr(); };
    auto gptr = [&](std::size_t i) -> double* {
      return wants(self, i) ? in(self, i).grad_buffer().ptr() : nullptr;
    };
    const kernels::ScanInputs ins{ptr(0), ptr(1), ptr(2), ptr(3), ptr(4), ptr(5)};
    const kernels::ScanGrads gr{gptr(0), gptr(1), gptr(2), gptr(3), gptr(4), gptr(5)};
    kernels::selective_scan_backward(ins, dims, states.ptr(), self.grad.ptr(), gr);
  });
}

}  // namespace mcsp::ad
