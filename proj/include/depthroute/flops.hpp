// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic forward-pass FLOPs for dense and block-masked models.
//
// Each multiply-accumulate counts 2 FLOPs. Per layer at sequence length s:
//   attention-linear  Q and O projections     2·2·s·d·d
//   kv-projections    K and V projections     2·2·s·d·d_kv
//   attention-scores  QKᵀ and value mixing    2·2·s²·d
//   ffn               gate, up, down          2·3·s·d·d_ff
// plus the LM head 2·s·d·V. Embedding lookups are free. Norms, residual adds
// and activations are excluded.
//
// A skipped FFN block removes its ffn term. A skipped attention block removes
// attention-linear and attention-scores but keeps kv-projections.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>

#include "depthroute/model.hpp"

namespace depthroute {

struct ArchDesc {
  std::size_t num_layers = 0;
  std::size_t hidden_dim = 0;
  std::size_t ffn_dim = 0;
  std::size_t kv_dim = 0;
  std::size_t vocab_size = 0;

  static ArchDesc from(const ModelConfig& config);
  /// L=32, d=4096, d_ff=14336, d_kv=1024, V=128256.
  static ArchDesc llama3_8b();
};

/// `full` counts the whole s×s score matrix; `causal` counts only the
/// s(s+1)/2 query-key pairs a causal kernel visits.
enum class ScoreCounting { full, causal };

struct FlopsBreakdown {
  double attention_linear = 0.0;
  double attention_scores = 0.0;
  double kv_projections = 0.0;
  double ffn = 0.0;
  double lm_head = 0.0;
  double embeddings = 0.0;

  double total() const;
};

struct FlopsReport {
  std::size_t seq_len = 0;
  double dense_flops = 0.0;
  double masked_flops = 0.0;
  double percentage = 1.0;
  FlopsBreakdown dense;
  FlopsBreakdown masked;
  std::string exclusions;
};

FlopsReport dense_flops(const ArchDesc& arch, std::size_t seq_len,
                        ScoreCounting counting = ScoreCounting::full);
/// mask has B entries for `granularity`; throws ConfigError otherwise.
FlopsReport masked_flops(const ArchDesc& arch, std::size_t seq_len, std::span<const int> mask,
                         Granularity granularity,
                         ScoreCounting counting = ScoreCounting::full);
/// FLOPs removed by skipping one block.
double removable_flops(const ArchDesc& arch, std::size_t seq_len, BlockKind kind,
                       ScoreCounting counting = ScoreCounting::full);

void write_flops_table(std::ostream& os, const FlopsReport& report);
/// component,dense,masked rows plus a total row.
void write_flops_csv(std::ostream& os, const FlopsReport& report);

}  // namespace depthroute
