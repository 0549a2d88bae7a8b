// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Static depth-pruning baselines. Each returns one mask for all inputs.
//   sleb      greedy removal of the block whose output is most similar
//             (cosine) to its input, recomputed after every removal
//   oneshot   rank blocks once by the perplexity with only that block masked
//   evopress  elitist evolutionary search over sparsity-exact masks

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "depthroute/encoder.hpp"
#include "depthroute/gates.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/model.hpp"

namespace depthroute {

struct StaticMaskResult {
  std::string method;  // "sleb", "oneshot-ppl" or "evopress"
  BinaryMask binary_mask;
  /// sleb: similarity of each removed block; oneshot: perplexity with each
  /// block masked alone; evopress: best fitness after seeding and after every
  /// generation.
  std::vector<double> score_trace;
};

/// Mean per-row cosine similarity between the input and output of every
/// block executed under `mask`, indexed by flat mask index. Masked entries
/// are NaN.
std::vector<double> block_io_similarity(const Transformer& model, std::span<const int> mask,
                                        std::span<const std::vector<int>> calib);

/// Throws ConfigError unless num_remove < B.
StaticMaskResult sleb_prune(const Transformer& model, std::span<const std::vector<int>> calib,
                            std::size_t num_remove);

StaticMaskResult oneshot_importance_prune(const Transformer& model,
                                          std::span<const std::vector<int>> calib,
                                          std::size_t num_remove);

struct EvoPressOptions {
  std::size_t generations = 50;
  std::size_t population = 8;
  std::size_t offspring_per_survivor = 2;
  std::uint64_t seed = 0;
};

StaticMaskResult evopress_search(const Transformer& model, std::span<const std::vector<int>> calib,
                                 double target_sparsity, const EvoPressOptions& options);

/// Number of zeros for a target sparsity over B entries.
std::size_t zeros_for_sparsity(double target_sparsity, std::size_t mask_size);

/// Wraps a static mask as a one-candidate library with a zero centroid.
MaskLibrary static_mask_library(const StaticMaskResult& result, const Transformer& model,
                                const EncoderConfig& encoder, double target_sparsity);

}  // namespace depthroute
