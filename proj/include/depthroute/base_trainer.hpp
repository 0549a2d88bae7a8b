// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Next-token pre-training of the toy transformer on packed token streams.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "depthroute/model.hpp"

namespace depthroute {

struct BaseTrainConfig {
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  std::size_t seq_len = 128;
  float lr = 3e-3f;
  std::size_t warmup = 20;
  float min_lr_ratio = 0.1f;
  float clip_norm = 1.0f;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BaseTrainResult {
  std::vector<double> losses;  // one per step
};

/// Adam with linear warmup, cosine decay and global-norm clipping. Updates
/// `model` in place.
BaseTrainResult train_base_model(Transformer& model, std::span<const std::vector<int>> data,
                                 const BaseTrainConfig& cfg);

/// Learning rate at `step` under the warmup plus cosine schedule.
float scheduled_lr(const BaseTrainConfig& cfg, std::size_t step);

}  // namespace depthroute
