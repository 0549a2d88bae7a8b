// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Hard concrete gates over transformer blocks.
//
// For block i with learnable log_alpha_i and u ~ Uniform(0,1):
//   s_i = sigmoid((1/beta)·log(u/(1-u)) + log_alpha_i)
//   z_i = clip01(s_i·(r - l) + l)
// Only the logistic noise is tempered by 1/beta. Consequently
//   P(z_i = 0) = sigmoid(-beta·(log_alpha_i + log(r / -l))).

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "depthroute/rng.hpp"
#include "depthroute/tensor.hpp"

namespace depthroute {

using BinaryMask = std::vector<int>;

struct GateParams {
  std::vector<float> log_alpha;
  float beta = 1.5f;
  float l = -0.1f;
  float r = 1.1f;
  float epsilon = 1e-6f;

  /// Gates that start almost surely open.
  static GateParams initial(std::size_t blocks, float log_alpha_init = 2.0f);
  /// Throws ConfigError unless l < 0 < 1 < r, beta > 0 and log_alpha finite.
  void validate() const;
  std::size_t size() const { return log_alpha.size(); }
};

/// One cluster's trained gates, binarized mask and routing centroid.
struct MaskCandidate {
  std::size_t cluster_id = 0;
  std::vector<float> centroid;
  GateParams gate;
  BinaryMask binary_mask;
  double achieved_sparsity = 0.0;
};

/// Fraction of zero entries.
double zero_fraction(std::span<const int> mask);

/// One gate value for a given uniform draw u (clamped to [eps, 1-eps]).
float hard_concrete(float log_alpha, double u, const GateParams& gate);

/// Tempered logistic noise (1/beta)·log(u/(1-u)), u clamped to [eps, 1-eps].
std::vector<float> sample_gate_noise(const GateParams& gate, Rng& rng);

/// Differentiable sample z given the log_alpha leaf (same length as gate).
Var sample_soft_mask(Var log_alpha, const GateParams& gate, Rng& rng);
std::vector<float> sample_soft_mask(const GateParams& gate, Rng& rng);

/// P(z = 0) for a single gate.
double gate_zero_probability(float log_alpha, const GateParams& gate);
/// Mean over blocks of P(z_i = 0).
double expected_sparsity(const GateParams& gate);
Var expected_sparsity(Var log_alpha, const GateParams& gate);

/// Zeroes exactly round(target·B) entries, lowest log_alpha first. Among
/// equal log_alpha the higher flat index is zeroed first.
BinaryMask binarize(const GateParams& gate, double target_sparsity);

}  // namespace depthroute
