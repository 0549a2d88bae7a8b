// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/gates.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "depthroute/errors.hpp"
#include "depthroute/kernels.hpp"

namespace depthroute {

GateParams GateParams::initial(std::size_t blocks, float log_alpha_init) {
  GateParams g;
  g.log_alpha.assign(blocks, log_alpha_init);
  return g;
}

void GateParams::validate() const {
  if (!(l < 0.0f && r > 1.0f)) throw ConfigError("gate stretch needs l < 0 < 1 < r");
  if (!(beta > 0.0f)) throw ConfigError("gate beta must be positive");
  if (!(epsilon > 0.0f && epsilon < 0.5f)) throw ConfigError("gate epsilon must be in (0, 0.5)");
  for (float v : log_alpha) {
    if (!std::isfinite(v)) throw ConfigError("log_alpha must be finite");
  }
}

double zero_fraction(std::span<const int> mask) {
  if (mask.empty()) return 0.0;
  const auto zeros = std::count(mask.begin(), mask.end(), 0);
  return static_cast<double>(zeros) / static_cast<double>(mask.size());
}

float hard_concrete(float log_alpha, double u, const GateParams& gate) {
  const double uc = std::clamp(u, static_cast<double>(gate.epsilon), 1.0 - gate.epsilon);
  const auto noise = static_cast<float>(std::log(uc / (1.0 - uc)) / gate.beta);
  const float s = kernels::sigmoid(log_alpha + noise);
  return std::min(1.0f, std::max(0.0f, (gate.r - gate.l) * s + gate.l));
}

std::vector<float> sample_gate_noise(const GateParams& gate, Rng& rng) {
  std::vector<float> noise(gate.size());
  const double eps = gate.epsilon;
  for (float& n : noise) {
    const double u = std::clamp(rng.uniform(), eps, 1.0 - eps);
    n = static_cast<float>(std::log(u / (1.0 - u)) / gate.beta);
  }
  return noise;
}

Var sample_soft_mask(Var log_alpha, const GateParams& gate, Rng& rng) {
  if (log_alpha.value().size() != gate.size()) {
    throw DimensionError("log_alpha leaf does not match gate size");
  }
  Var noise = log_alpha.tape().leaf(Tensor::vector(sample_gate_noise(gate, rng)));
  Var s = ops::sigmoid(ops::add(log_alpha, noise));
  return ops::clip01(ops::scale(s, gate.r - gate.l, gate.l));
}

std::vector<float> sample_soft_mask(const GateParams& gate, Rng& rng) {
  std::vector<float> z = sample_gate_noise(gate, rng);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const float s = kernels::sigmoid(gate.log_alpha[i] + z[i]);
    z[i] = std::min(1.0f, std::max(0.0f, (gate.r - gate.l) * s + gate.l));
  }
  return z;
}

double gate_zero_probability(float log_alpha, const GateParams& gate) {
  const double shift = std::log(static_cast<double>(gate.r) / -static_cast<double>(gate.l));
  const double x = -static_cast<double>(gate.beta) * (static_cast<double>(log_alpha) + shift);
  return 1.0 / (1.0 + std::exp(-x));
}

double expected_sparsity(const GateParams& gate) {
  if (gate.size() == 0) return 0.0;
  double acc = 0.0;
  for (float la : gate.log_alpha) acc += gate_zero_probability(la, gate);
  return acc / static_cast<double>(gate.size());
}

Var expected_sparsity(Var log_alpha, const GateParams& gate) {
  const float shift = static_cast<float>(std::log(static_cast<double>(gate.r) / -gate.l));
  Var logits = ops::scale(log_alpha, -gate.beta, -gate.beta * shift);
  return ops::mean(ops::sigmoid(logits));
}

BinaryMask binarize(const GateParams& gate, double target_sparsity) {
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
    throw ConfigError("target sparsity must lie in [0, 1)");
  }
  const std::size_t b = gate.size();
  const auto zeros = static_cast<std::size_t>(std::llround(target_sparsity * static_cast<double>(b)));
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
    if (gate.log_alpha[a] != gate.log_alpha[c]) return gate.log_alpha[a] < gate.log_alpha[c];
    return a > c;
  });
  BinaryMask mask(b, 1);
  for (std::size_t i = 0; i < zeros && i < b; ++i) mask[order[i]] = 0;
  return mask;
}

}  // namespace depthroute
