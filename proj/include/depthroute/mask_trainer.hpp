// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-cluster L0 mask training over a frozen model.
//
// Each step draws one gate sample shared by the batch, scales block outputs
// by it, and minimises
//   lm_loss + lambda1·(t - s_target) + lambda2·(t - s_target)²
// over log_alpha while maximising it over (lambda1, lambda2). t is the
// closed-form expected zero fraction of the gates.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "depthroute/gates.hpp"
#include "depthroute/model.hpp"
#include "depthroute/optim.hpp"

namespace depthroute {

struct SparsityController {
  float lambda1 = 0.0f;
  float lambda2 = 0.0f;
  double s_target = 0.0;
};

struct TrainingConfig {
  std::size_t batch_size = 32;
  float gate_lr = 0.1f;
  float lagrangian_lr = 0.1f;
  std::size_t max_steps = 1000;
  std::size_t train_seq_len = 512;
  std::uint64_t seed = 0;
  float log_alpha_init = 2.0f;
  OptimizerKind gate_optimizer = OptimizerKind::adam;
  OptimizerKind lagrangian_optimizer = OptimizerKind::adam;
  float adam_beta2 = 0.99f;
  /// The penalty target ramps linearly from 0 over min(this, max_steps / 2)
  /// steps, then holds at s_target.
  std::size_t target_warmup_steps = 1000;
  /// When false the objective is the sparsity penalty alone.
  bool include_lm_loss = true;

  void validate() const;
};

struct TrainingLogRow {
  std::size_t step = 0;
  double lm_loss = 0.0;
  double penalty = 0.0;
  double expected_sparsity = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

struct MaskTrainingResult {
  MaskCandidate candidate;
  SparsityController controller;
  std::vector<TrainingLogRow> log;
};

double scheduled_target(const TrainingConfig& cfg, double s_target, std::size_t step);
double lagrangian_penalty(double t, const SparsityController& ctrl);
Var lagrangian_penalty(Var t, Var lambda1, Var lambda2, double s_target);

/// Packs `sequences` into one stream and draws batch_size random windows of
/// min(train_seq_len, stream length) tokens.
TokenBatch sample_packed_batch(std::span<const std::vector<int>> sequences,
                               std::size_t batch_size, std::size_t seq_len, Rng& rng);

/// Trains one cluster's gates. Throws ConfigError on empty data and
/// TrainingError when the objective becomes non-finite.
MaskTrainingResult train_cluster_mask(const Transformer& model,
                                      std::span<const std::vector<int>> cluster_data,
                                      const TrainingConfig& cfg, SparsityController ctrl,
                                      std::size_t cluster_id = 0,
                                      std::vector<float> centroid = {});

/// step,lm_loss,penalty,expected_sparsity,lambda1,lambda2
void write_training_log_csv(std::ostream& os, std::span<const TrainingLogRow> rows);

}  // namespace depthroute
