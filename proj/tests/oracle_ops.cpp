// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracle.hpp"

namespace oracle {
namespace {

namespace ops = depthroute::ops;
using depthroute::GateParams;

std::size_t dim(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

Vec map(const Vec& x, double (*f)(double)) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

OpUnderTest unary(const char* name, Var (*op)(Var), double (*ref)(double), double lo = -2.0,
                  double hi = 2.0) {
  return {name,
          [=](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
            in = {random_tensor({dim(rng, 1, 4), dim(rng, 1, 6)}, rng, lo, hi)};
            g = {true};
          },
          [=](std::vector<Var>& in) { return op(in[0]); },
          [=](const std::vector<Vec>& in) { return map(in[0], ref); }};
}

double silu_ref(double x) { return x * sigmoid(x); }
double exp_ref(double x) { return std::exp(x); }
double log_ref(double x) { return std::log(x); }
double clip_ref(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

std::vector<OpUnderTest> differentiable_ops() {
  std::vector<OpUnderTest> out;

  // shape parameters ride along as non-differentiable inputs
  out.push_back({"matmul",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t m = dim(rng, 1, 6), k = dim(rng, 1, 7), n = dim(rng, 1, 5);
                   in = {random_tensor({m, k}, rng), random_tensor({k, n}, rng),
                         Tensor({3}, std::vector<float>{float(m), float(k), float(n)})};
                   g = {true, true, false};
                 },
                 [](std::vector<Var>& in) { return ops::matmul(in[0], in[1]); },
                 [](const std::vector<Vec>& in) {
                   return matmul(in[0], in[1], std::size_t(in[2][0]), std::size_t(in[2][1]),
                                 std::size_t(in[2][2]));
                 }});

  out.push_back({"add",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const depthroute::Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
                   in = {random_tensor(s, rng), random_tensor(s, rng)};
                   g = {true, true};
                 },
                 [](std::vector<Var>& in) { return ops::add(in[0], in[1]); },
                 [](const std::vector<Vec>& in) {
                   Vec y(in[0].size());
                   for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[0][i] + in[1][i];
                   return y;
                 }});

  out.push_back({"mul",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const depthroute::Shape s{dim(rng, 1, 4), dim(rng, 1, 5)};
                   in = {random_tensor(s, rng), random_tensor(s, rng)};
                   g = {true, true};
                 },
                 [](std::vector<Var>& in) { return ops::mul(in[0], in[1]); },
                 [](const std::vector<Vec>& in) {
                   Vec y(in[0].size());
                   for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[0][i] * in[1][i];
                   return y;
                 }});

  out.push_back({"mul-scalar",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({dim(rng, 1, 4), dim(rng, 1, 5)}, rng),
                         random_tensor({1}, rng)};
                   g = {true, true};
                 },
                 [](std::vector<Var>& in) { return ops::mul(in[0], in[1]); },
                 [](const std::vector<Vec>& in) {
                   Vec y(in[0].size());
                   for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[0][i] * in[1][0];
                   return y;
                 }});

  out.push_back(unary("sigmoid", ops::sigmoid, sigmoid));
  out.push_back(unary("silu", ops::silu, silu_ref));
  out.push_back(unary("exp", ops::exp, exp_ref));
  out.push_back(unary("log", ops::log, log_ref, 0.1, 2.0));

  OpUnderTest clip = unary("clip01", ops::clip01, clip_ref);
  clip.make = [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
    Tensor t({dim(rng, 1, 4), dim(rng, 1, 6)});
    // keep clear of the kinks so central differences are meaningful
    for (float& x : t.data()) {
      do {
        x = static_cast<float>(-2.0 + 4.0 * rng.uniform());
      } while (std::abs(x) < 0.01f || std::abs(x - 1.0f) < 0.01f);
    }
    in = {t};
    g = {true};
  };
  out.push_back(clip);

  out.push_back({"scale",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({dim(rng, 1, 4), dim(rng, 1, 5)}, rng),
                         random_tensor({2}, rng)};
                   g = {true, false};
                 },
                 [](std::vector<Var>& in) {
                   const auto p = in[1].value().data();
                   return ops::scale(in[0], p[0], p[1]);
                 },
                 [](const std::vector<Vec>& in) {
                   Vec y(in[0].size());
                   // the op takes float constants
                   const double f = static_cast<float>(in[1][0]), o = static_cast<float>(in[1][1]);
                   for (std::size_t i = 0; i < y.size(); ++i) y[i] = f * in[0][i] + o;
                   return y;
                 }});

  out.push_back({"sum",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({dim(rng, 1, 4), dim(rng, 1, 5)}, rng)};
                   g = {true};
                 },
                 [](std::vector<Var>& in) { return ops::sum(in[0]); },
                 [](const std::vector<Vec>& in) {
                   double s = 0.0;
                   for (double x : in[0]) s += x;
                   return Vec{s};
                 }});

  out.push_back({"mean",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({dim(rng, 1, 4), dim(rng, 1, 5)}, rng)};
                   g = {true};
                 },
                 [](std::vector<Var>& in) { return ops::mean(in[0]); },
                 [](const std::vector<Vec>& in) {
                   double s = 0.0;
                   for (double x : in[0]) s += x;
                   return Vec{s / static_cast<double>(in[0].size())};
                 }});

  out.push_back({"element",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   Tensor x = random_tensor({dim(rng, 2, 9)}, rng);
                   const float idx = static_cast<float>(rng.below(x.size()));
                   in = {x, Tensor({1}, std::vector<float>{idx})};
                   g = {true, false};
                 },
                 [](std::vector<Var>& in) {
                   return ops::element(in[0], static_cast<std::size_t>(in[1].value()[0]));
                 },
                 [](const std::vector<Vec>& in) {
                   return Vec{in[0][static_cast<std::size_t>(in[1][0])]};
                 }});

  out.push_back({"softmax_lastdim",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t cols = dim(rng, 2, 6);
                   in = {random_tensor({dim(rng, 1, 4), cols}, rng),
                         Tensor({1}, std::vector<float>{float(cols)})};
                   g = {true, false};
                 },
                 [](std::vector<Var>& in) { return ops::softmax_lastdim(in[0]); },
                 [](const std::vector<Vec>& in) {
                   return softmax_rows(in[0], std::size_t(in[1][0]));
                 }});

  out.push_back({"rmsnorm",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t d = dim(rng, 2, 8);
                   in = {random_tensor({dim(rng, 1, 4), d}, rng), random_tensor({d}, rng)};
                   g = {true, true};
                 },
                 [](std::vector<Var>& in) { return ops::rmsnorm(in[0], in[1], 1e-5f); },
                 [](const std::vector<Vec>& in) {
                   return rmsnorm(in[0], in[1], static_cast<double>(1e-5f));
                 }});

  out.push_back({"cross_entropy",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t rows = 4, vocab = 10;
                   Tensor t({rows});
                   for (float& x : t.data()) x = static_cast<float>(rng.below(vocab));
                   t[rng.below(rows)] = -1.0f;  // one ignored row
                   in = {random_tensor({rows, vocab}, rng), t};
                   g = {true, false};
                 },
                 [](std::vector<Var>& in) {
                   std::vector<int> targets;
                   for (float x : in[1].value().data()) targets.push_back(static_cast<int>(x));
                   return ops::cross_entropy(in[0], targets);
                 },
                 [](const std::vector<Vec>& in) {
                   std::vector<int> targets;
                   for (double x : in[1]) targets.push_back(static_cast<int>(x));
                   return Vec{cross_entropy(in[0], targets, 10)};
                 }});

  out.push_back({"embedding",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t vocab = dim(rng, 2, 7), d = dim(rng, 1, 5), n = dim(rng, 1, 6);
                   Tensor ids({n});
                   for (float& x : ids.data()) x = static_cast<float>(rng.below(vocab));
                   in = {random_tensor({vocab, d}, rng), ids,
                         Tensor({1}, std::vector<float>{float(d)})};
                   g = {true, false, false};
                 },
                 [](std::vector<Var>& in) {
                   std::vector<int> ids;
                   for (float x : in[1].value().data()) ids.push_back(static_cast<int>(x));
                   return ops::embedding(in[0], ids);
                 },
                 [](const std::vector<Vec>& in) {
                   const std::size_t d = std::size_t(in[2][0]);
                   Vec y;
                   for (double id : in[1]) {
                     for (std::size_t c = 0; c < d; ++c) y.push_back(in[0][std::size_t(id) * d + c]);
                   }
                   return y;
                 }});

  out.push_back({"rope",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t heads = dim(rng, 1, 3), rows = dim(rng, 1, 5);
                   Tensor pos({rows});
                   for (float& x : pos.data()) x = static_cast<float>(rng.below(40));
                   in = {random_tensor({rows, heads * 4}, rng), pos,
                         Tensor({1}, std::vector<float>{float(heads)})};
                   g = {true, false, false};
                 },
                 [](std::vector<Var>& in) {
                   std::vector<std::size_t> pos;
                   for (float x : in[1].value().data()) pos.push_back(static_cast<std::size_t>(x));
                   return ops::rope(in[0], static_cast<std::size_t>(in[2].value()[0]), 4, pos,
                                    10000.0f);
                 },
                 [](const std::vector<Vec>& in) {
                   std::vector<std::size_t> pos;
                   for (double x : in[1]) pos.push_back(static_cast<std::size_t>(x));
                   return rope(in[0], std::size_t(in[2][0]), 4, pos, 10000.0);
                 }});

  out.push_back({"causal_attention",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t seq = dim(rng, 1, 4), nseq = dim(rng, 1, 2);
                   const std::size_t kv = dim(rng, 1, 2), heads = kv * dim(rng, 1, 2), hd = 4;
                   const std::size_t rows = seq * nseq;
                   in = {random_tensor({rows, heads * hd}, rng), random_tensor({rows, kv * hd}, rng),
                         random_tensor({rows, kv * hd}, rng),
                         Tensor({3}, std::vector<float>{float(seq), float(heads), float(kv)})};
                   g = {true, true, true, false};
                 },
                 [](std::vector<Var>& in) {
                   const auto p = in[3].value().data();
                   return ops::causal_attention(
                       in[0], in[1], in[2],
                       {std::size_t(p[0]), std::size_t(p[1]), std::size_t(p[2]), 4});
                 },
                 [](const std::vector<Vec>& in) {
                   return attention(in[0], in[1], in[2], std::size_t(in[3][0]),
                                    std::size_t(in[3][1]), std::size_t(in[3][2]), 4);
                 }});

  // gate machinery composed from the primitives above
  out.push_back({"sample_soft_mask",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   const std::size_t b = dim(rng, 2, 8);
                   for (;;) {
                     Tensor la = random_tensor({b}, rng);
                     const float seed = static_cast<float>(rng.below(1u << 20));
                     GateParams gate = GateParams::initial(b);
                     gate.log_alpha.assign(la.data().begin(), la.data().end());
                     Rng r(static_cast<std::uint64_t>(seed));
                     const auto noise = depthroute::sample_gate_noise(gate, r);
                     bool clear = true;
                     for (std::size_t i = 0; i < b; ++i) {
                       const double pre = sigmoid(double(la[i]) + noise[i]) * 1.2 - 0.1;
                       clear = clear && std::abs(pre) > 0.01 && std::abs(pre - 1.0) > 0.01;
                     }
                     if (!clear) continue;
                     in = {la, Tensor({1}, std::vector<float>{seed})};
                     g = {true, false};
                     return;
                   }
                 },
                 [](std::vector<Var>& in) {
                   GateParams gate = GateParams::initial(in[0].value().size());
                   Rng r(static_cast<std::uint64_t>(in[1].value()[0]));
                   return depthroute::sample_soft_mask(in[0], gate, r);
                 },
                 [](const std::vector<Vec>& in) {
                   GateParams gate = GateParams::initial(in[0].size());
                   Rng r(static_cast<std::uint64_t>(in[1][0]));
                   const auto noise = depthroute::sample_gate_noise(gate, r);
                   const double l = static_cast<double>(gate.l), rr = static_cast<double>(gate.r);
                   Vec z(in[0].size());
                   for (std::size_t i = 0; i < z.size(); ++i) {
                     z[i] = clip_ref(sigmoid(in[0][i] + noise[i]) * (rr - l) + l);
                   }
                   return z;
                 }});

  out.push_back({"expected_sparsity",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({dim(rng, 1, 8)}, rng, -4.0, 4.0)};
                   g = {true};
                 },
                 [](std::vector<Var>& in) {
                   return depthroute::expected_sparsity(in[0],
                                                        GateParams::initial(in[0].value().size()));
                 },
                 [](const std::vector<Vec>& in) {
                   double s = 0.0;
                   for (double la : in[0]) s += sigmoid(-1.5 * (la + std::log(11.0)));
                   return Vec{s / static_cast<double>(in[0].size())};
                 }});

  out.push_back({"lagrangian_penalty",
                 [](Rng& rng, std::vector<Tensor>& in, std::vector<bool>& g) {
                   in = {random_tensor({1}, rng, 0.0, 1.0), random_tensor({1}, rng),
                         random_tensor({1}, rng), random_tensor({1}, rng, 0.0, 0.9)};
                   g = {true, true, true, false};
                 },
                 [](std::vector<Var>& in) {
                   return depthroute::lagrangian_penalty(in[0], in[1], in[2], in[3].value()[0]);
                 },
                 [](const std::vector<Vec>& in) {
                   const double gap = in[0][0] - in[3][0];
                   return Vec{in[1][0] * gap + in[2][0] * gap * gap};
                 }});
  return out;
}

}  // namespace oracle
