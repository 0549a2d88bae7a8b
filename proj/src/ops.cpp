// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <limits>

#include "depthroute/errors.hpp"
#include "depthroute/kernels.hpp"
#include "depthroute/tensor.hpp"

namespace depthroute::ops {
namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_matrix(const char* op, Var x) {
  if (x.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(x.shape()));
  }
}



/// Unary elementwise op with derivative expressed through (input, output).
template <class Fwd, class Deriv>
Var unary(const char* name, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const std::uint32_t xi = x.id();
  return x.tape().record(name, std::move(out), {x}, [xi, deriv](Tape& t, std::uint32_t self) {
    if (!t.requires_grad(xi)) return;
    auto g = t.grad(self);
    const Tensor& in = t.value(xi);
    const Tensor& out = t.value(self);
    auto gx = t.grad_buffer(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], out[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm(a.value().data(), b.value().data(), out.data(), m, k, n);
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().record("matmul", std::move(out), {a, b},
                         [ai, bi, m, k, n](Tape& t, std::uint32_t self) {
                           auto g = t.grad(self);
                           if (t.requires_grad(ai)) {
                             kernels::gemm_nt(g, t.value(bi).data(), t.grad_buffer(ai), m, n, k,
                                              true);
                           }
                           if (t.requires_grad(bi)) {
                             kernels::gemm_tn(t.value(ai).data(), g, t.grad_buffer(bi), k, m, n,
                                              true);
                           }
                         });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().record("add", std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    auto g = t.grad(self);
    for (std::uint32_t in : {ai, bi}) {
      if (!t.requires_grad(in)) continue;
      auto gi = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  const bool broadcast = b.value().size() == 1 && a.shape() != b.shape();
  if (!broadcast) require_same_shape("mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] * b.value()[broadcast ? 0 : i];
  }
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().record(
      "mul", std::move(out), {a, b}, [ai, bi, broadcast](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        if (t.requires_grad(ai)) {
          auto ga = t.grad_buffer(ai);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[broadcast ? 0 : i];
        }
        if (t.requires_grad(bi)) {
          auto gb = t.grad_buffer(bi);
          if (broadcast) {
            float acc = 0.0f;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
            gb[0] += acc;
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
          }
        }
      });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x, [](float v) { return kernels::sigmoid(v); },
      [](float, float y) { return y * (1.0f - y); });
}

Var silu(Var x) {
  return unary(
      "silu", x, [](float v) { return kernels::silu(v); },
      [](float v, float) {
        const float s = kernels::sigmoid(v);
        return s * (1.0f + v * (1.0f - s));
      });
}

Var log(Var x) {
  for (float v : x.value().data()) {
    if (!(v > 0.0f)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(
      "log", x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](float v) { return std::exp(v); }, [](float, float y) { return y; });
}

Var clip01(Var x) {
  return unary(
      "clip01", x, [](float v) { return std::min(1.0f, std::max(0.0f, v)); },
      [](float v, float) { return (v > 0.0f && v < 1.0f) ? 1.0f : 0.0f; });
}

Var scale(Var x, float factor, float offset) {
  return unary(
      "scale", x, [factor, offset](float v) { return factor * v + offset; },
      [factor](float, float) { return factor; });
}

Var sum(Var x) {
  float acc = 0.0f;
  for (float v : x.value().data()) acc += v;
  const std::uint32_t xi = x.id();
  return x.tape().record("sum", Tensor::scalar(acc), {x}, [xi](Tape& t, std::uint32_t self) {
    const float g = t.grad(self)[0];
    for (float& v : t.grad_buffer(xi)) v += g;
  });
}

Var mean(Var x) {
  const float n = static_cast<float>(x.value().size());
  return scale(sum(x), 1.0f / n);
}

Var element(Var x, std::size_t index) {
  if (index >= x.value().size()) {
    throw IndexError("element " + std::to_string(index) + " of tensor " +
                     shape_string(x.shape()));
  }
  const std::uint32_t xi = x.id();
  return x.tape().record("element", Tensor::scalar(x.value()[index]), {x},
                         [xi, index](Tape& t, std::uint32_t self) {
                           t.grad_buffer(xi)[index] += t.grad(self)[0];
                         });
}

Var softmax_lastdim(Var x) {
  const Tensor& in = x.value();
  const std::size_t cols = in.cols();
  const std::size_t rows = in.size() / cols;
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = in.data().data() + r * cols;
    float* yr = out.data().data() + r * cols;
    const float mx = *std::max_element(xr, xr + cols);
    float s = 0.0f;
    for (std::size_t c = 0; c < cols; ++c) {
      yr[c] = std::exp(xr[c] - mx);
      s += yr[c];
    }
    for (std::size_t c = 0; c < cols; ++c) yr[c] /= s;
  }
  const std::uint32_t xi = x.id();
  return x.tape().record("softmax", std::move(out), {x},
                         [xi, rows, cols](Tape& t, std::uint32_t self) {
                           auto g = t.grad(self);
                           const Tensor& y = t.value(self);
                           auto gx = t.grad_buffer(xi);
                           for (std::size_t r = 0; r < rows; ++r) {
                             float dot = 0.0f;
                             for (std::size_t c = 0; c < cols; ++c) {
                               dot += g[r * cols + c] * y[r * cols + c];
                             }
                             for (std::size_t c = 0; c < cols; ++c) {
                               gx[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
                             }
                           }
                         });
}

Var rmsnorm(Var x, Var weight, float eps) {
  const std::size_t dim = x.value().cols();
  const std::size_t rows = x.value().size() / dim;
  if (weight.value().size() != dim) {
    throw DimensionError("rmsnorm: weight " + shape_string(weight.shape()) +
                         " does not match input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  std::vector<float> inv(rows);
  kernels::rmsnorm(x.value().data(), weight.value().data(), out.data(), rows, dim, eps, inv);
  const std::uint32_t xi = x.id(), wi = weight.id();
  return x.tape().record(
      "rmsnorm", std::move(out), {x, weight},
      [xi, wi, rows, dim, inv = std::move(inv)](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        const Tensor& xv = t.value(xi);
        const Tensor& w = t.value(wi);
        if (t.requires_grad(xi)) {
          auto gx = t.grad_buffer(xi);
          for (std::size_t r = 0; r < rows; ++r) {
            const float* xr = xv.data().data() + r * dim;
            const float* gr = g.data() + r * dim;
            float dot = 0.0f;
            for (std::size_t i = 0; i < dim; ++i) dot += gr[i] * w[i] * xr[i];
            const float ir = inv[r];
            const float coef = ir * ir * ir * dot / static_cast<float>(dim);
            for (std::size_t i = 0; i < dim; ++i) {
              gx[r * dim + i] += ir * gr[i] * w[i] - coef * xr[i];
            }
          }
        }
        if (t.requires_grad(wi)) {
          auto gw = t.grad_buffer(wi);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) {
              gw[i] += g[r * dim + i] * xv[r * dim + i] * inv[r];
            }
          }
        }
      });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  require_matrix("cross_entropy", logits);
  const std::size_t rows = logits.shape()[0], vocab = logits.shape()[1];
  if (targets.size() != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(logits.shape()));
  }
  std::size_t valid = 0;
  for (int tgt : targets) {
    if (tgt >= static_cast<int>(vocab)) {
      throw IndexError("cross_entropy: target " + std::to_string(tgt) + " >= vocab size " +
                       std::to_string(vocab));
    }
    if (tgt >= 0) ++valid;
  }
  if (valid == 0) throw InputError("cross_entropy: no scored positions");
  const Tensor& lv = logits.value();
  std::vector<float> lse(rows, 0.0f);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    const float* row = lv.data().data() + r * vocab;
    const float mx = *std::max_element(row, row + vocab);
    float s = 0.0f;
    for (std::size_t c = 0; c < vocab; ++c) s += std::exp(row[c] - mx);
    lse[r] = mx + std::log(s);
    total += static_cast<double>(lse[r] - row[targets[r]]);
  }
  const float loss = static_cast<float>(total / static_cast<double>(valid));
  const std::uint32_t li = logits.id();
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape().record(
      "cross_entropy", Tensor::scalar(loss), {logits},
      [li, rows, vocab, valid, lse = std::move(lse), tg = std::move(tg)](Tape& t,
                                                                         std::uint32_t self) {
        const float g = t.grad(self)[0] / static_cast<float>(valid);
        const Tensor& lv = t.value(li);
        auto gl = t.grad_buffer(li);
        for (std::size_t r = 0; r < rows; ++r) {
          if (tg[r] < 0) continue;
          for (std::size_t c = 0; c < vocab; ++c) {
            gl[r * vocab + c] += g * std::exp(lv[r * vocab + c] - lse[r]);
          }
          gl[r * vocab + static_cast<std::size_t>(tg[r])] -= g;
        }
      });
}

Var embedding(Var table, std::span<const int> ids) {
  require_matrix("embedding", table);
  const std::size_t vocab = table.shape()[0], dim = table.shape()[1];
  Tensor out({ids.size(), dim});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= vocab) {
      throw IndexError("embedding: token id " + std::to_string(ids[r]) + " outside vocab " +
                       std::to_string(vocab));
    }
    std::copy_n(table.value().data().data() + static_cast<std::size_t>(ids[r]) * dim, dim,
                out.data().data() + r * dim);
  }
  const std::uint32_t ti = table.id();
  std::vector<int> id_copy(ids.begin(), ids.end());
  return table.tape().record(
      "embedding", std::move(out), {table},
      [ti, dim, id_copy = std::move(id_copy)](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        auto gt = t.grad_buffer(ti);
        for (std::size_t r = 0; r < id_copy.size(); ++r) {
          float* dst = gt.data() + static_cast<std::size_t>(id_copy[r]) * dim;
          for (std::size_t i = 0; i < dim; ++i) dst[i] += g[r * dim + i];
        }
      });
}

Var rope(Var x, std::size_t heads, std::size_t head_dim, std::span<const std::size_t> positions,
         float theta) {
  require_matrix("rope", x);
  const std::size_t rows = x.shape()[0];
  if (x.shape()[1] != heads * head_dim || positions.size() != rows || head_dim % 2 != 0) {
    throw DimensionError("rope: input " + shape_string(x.shape()) + " incompatible with " +
                         std::to_string(heads) + " heads of dim " + std::to_string(head_dim));
  }
  Tensor out = x.value();
  kernels::rope(out.data(), rows, heads, head_dim, positions, theta);
  const std::uint32_t xi = x.id();
  std::vector<std::size_t> pos(positions.begin(), positions.end());
  return x.tape().record(
      "rope", std::move(out), {x},
      [xi, rows, heads, head_dim, theta, pos = std::move(pos)](Tape& t, std::uint32_t self) {
        auto g = t.grad(self);
        std::vector<float> back(g.begin(), g.end());
        kernels::rope(back, rows, heads, head_dim, pos, theta, true);
        auto gx = t.grad_buffer(xi);
        for (std::size_t i = 0; i < back.size(); ++i) gx[i] += back[i];
      });
}

Var causal_attention(Var q, Var k, Var v, const AttentionShape& shape) {
  require_matrix("attention", q);
  const kernels::AttentionDims dims{shape.heads, shape.kv_heads, shape.head_dim};
  const std::size_t rows = q.shape()[0];
  const std::size_t seq = shape.seq_len;
  if (shape.kv_heads == 0 || shape.heads % shape.kv_heads != 0 || seq == 0 ||
      rows % seq != 0 || q.shape()[1] != dims.q_width() ||
      k.shape() != Shape{rows, dims.kv_width()} || v.shape() != k.shape()) {
    throw DimensionError("attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()) +
                         " inconsistent with the head layout");
  }
  const std::size_t batch = rows / seq;
  const std::size_t qw = dims.q_width(), kw = dims.kv_width();
  Tensor out({rows, qw});
  const bool keep = q.requires_grad() || k.requires_grad() || v.requires_grad();
  std::vector<float> probs(keep ? batch * shape.heads * seq * seq : 0);
  for (std::size_t b = 0; b < batch; ++b) {
    std::span<float> pb;
    if (keep) pb = std::span<float>(probs).subspan(b * shape.heads * seq * seq, shape.heads * seq * seq);
    kernels::attention_forward(q.value().data().subspan(b * seq * qw, seq * qw),
                               k.value().data().subspan(b * seq * kw, seq * kw),
                               v.value().data().subspan(b * seq * kw, seq * kw),
                               out.data().subspan(b * seq * qw, seq * qw), dims, seq, seq, 0, pb);
  }
  const std::uint32_t qi = q.id(), ki = k.id(), vi = v.id();
  return q.tape().record(
      "attention", std::move(out), {q, k, v},
      [qi, ki, vi, dims, seq, batch, probs = std::move(probs)](Tape& t, std::uint32_t self) {
        const std::size_t qw = dims.q_width(), kw = dims.kv_width();
        auto g = t.grad(self);
        std::span<float> dq, dk, dv;
        if (t.requires_grad(qi)) dq = t.grad_buffer(qi);
        if (t.requires_grad(ki)) dk = t.grad_buffer(ki);
        if (t.requires_grad(vi)) dv = t.grad_buffer(vi);
        const std::size_t pstride = dims.heads * seq * seq;
        for (std::size_t b = 0; b < batch; ++b) {
          auto sub = [&](std::span<float> s, std::size_t w) {
            return s.empty() ? s : s.subspan(b * seq * w, seq * w);
          };
          kernels::attention_backward(t.value(qi).data().subspan(b * seq * qw, seq * qw),
                                      t.value(ki).data().subspan(b * seq * kw, seq * kw),
                                      t.value(vi).data().subspan(b * seq * kw, seq * kw),
                                      std::span<const float>(probs).subspan(b * pstride, pstride),
                                      g.subspan(b * seq * qw, seq * qw), sub(dq, qw), sub(dk, kw),
                                      sub(dv, kw), dims, seq);
        }
      });
}

}  // namespace depthroute::ops
