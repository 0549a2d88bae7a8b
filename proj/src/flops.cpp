// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/flops.hpp"

#include <cstdio>
#include <ostream>

#include "depthroute/errors.hpp"

namespace depthroute {
namespace {

struct LayerTerms {
  double attention_linear, attention_scores, kv_projections, ffn;
};

LayerTerms layer_terms(const ArchDesc& a, std::size_t seq_len, ScoreCounting counting) {
  const double s = static_cast<double>(seq_len);
  const double d = static_cast<double>(a.hidden_dim);
  const double pairs = counting == ScoreCounting::full ? s * s : s * (s + 1.0) / 2.0;
  return {2.0 * 2.0 * s * d * d, 2.0 * 2.0 * pairs * d,
          2.0 * 2.0 * s * d * static_cast<double>(a.kv_dim),
          2.0 * 3.0 * s * d * static_cast<double>(a.ffn_dim)};
}

constexpr const char* kExclusions =
    "excludes normalisation, residual adds, activations and softmax exponentials";

}  // namespace

ArchDesc ArchDesc::from(const ModelConfig& c) {
  return {c.num_layers, c.hidden_dim, c.ffn_dim, c.kv_dim(), c.vocab_size};
}

ArchDesc ArchDesc::llama3_8b() { return {32, 4096, 14336, 1024, 128256}; }

double FlopsBreakdown::total() const {
  return attention_linear + attention_scores + kv_projections + ffn + lm_head + embeddings;
}

FlopsReport dense_flops(const ArchDesc& arch, std::size_t seq_len, ScoreCounting counting) {
  if (seq_len == 0) throw ConfigError("seq_len must be >= 1");
  const LayerTerms t = layer_terms(arch, seq_len, counting);
  const double layers = static_cast<double>(arch.num_layers);
  FlopsReport r;
  r.seq_len = seq_len;
  r.dense.attention_linear = layers * t.attention_linear;
  r.dense.attention_scores = layers * t.attention_scores;
  r.dense.kv_projections = layers * t.kv_projections;
  r.dense.ffn = layers * t.ffn;
  r.dense.lm_head = 2.0 * static_cast<double>(seq_len) * static_cast<double>(arch.hidden_dim) *
                    static_cast<double>(arch.vocab_size);
  r.masked = r.dense;
  r.dense_flops = r.masked_flops = r.dense.total();
  r.percentage = 1.0;
  r.exclusions = kExclusions;
  return r;
}

FlopsReport masked_flops(const ArchDesc& arch, std::size_t seq_len, std::span<const int> mask,
                         Granularity granularity, ScoreCounting counting) {
  const std::size_t expected =
      granularity == Granularity::block ? 2 * arch.num_layers : arch.num_layers;
  if (mask.size() != expected) {
    throw ConfigError("mask has " + std::to_string(mask.size()) + " entries, expected " +
                      std::to_string(expected));
  }
  FlopsReport r = dense_flops(arch, seq_len, counting);
  const LayerTerms t = layer_terms(arch, seq_len, counting);
  for (std::size_t l = 0; l < arch.num_layers; ++l) {
    if (mask[BlockId{l, BlockKind::attention}.flat_index(granularity)] == 0) {
      r.masked.attention_linear -= t.attention_linear;
      r.masked.attention_scores -= t.attention_scores;
    }
    if (mask[BlockId{l, BlockKind::ffn}.flat_index(granularity)] == 0) r.masked.ffn -= t.ffn;
  }
  r.masked_flops = r.masked.total();
  r.percentage = r.masked_flops / r.dense_flops;
  return r;
}

double removable_flops(const ArchDesc& arch, std::size_t seq_len, BlockKind kind,
                       ScoreCounting counting) {
  const LayerTerms t = layer_terms(arch, seq_len, counting);
  return kind == BlockKind::ffn ? t.ffn : t.attention_linear + t.attention_scores;
}

void write_flops_table(std::ostream& os, const FlopsReport& r) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-18s %16s %16s\n", "component", "dense", "masked");
  os << line;
  auto row = [&](const char* name, double dense, double masked) {
    std::snprintf(line, sizeof(line), "%-18s %16.6e %16.6e\n", name, dense, masked);
    os << line;
  };
  row("attention-linear", r.dense.attention_linear, r.masked.attention_linear);
  row("attention-scores", r.dense.attention_scores, r.masked.attention_scores);
  row("kv-projections", r.dense.kv_projections, r.masked.kv_projections);
  row("ffn", r.dense.ffn, r.masked.ffn);
  row("lm-head", r.dense.lm_head, r.masked.lm_head);
  row("embeddings", r.dense.embeddings, r.masked.embeddings);
  row("total", r.dense_flops, r.masked_flops);
  std::snprintf(line, sizeof(line), "seq_len %zu, masked/dense = %.4f (%.1f%%)\n", r.seq_len,
                r.percentage, 100.0 * r.percentage);
  os << line << "note: " << r.exclusions << '\n';
}

void write_flops_csv(std::ostream& os, const FlopsReport& r) {
  os << "component,dense,masked\n";
  char line[160];
  auto row = [&](const char* name, double dense, double masked) {
    std::snprintf(line, sizeof(line), "%s,%.0f,%.0f\n", name, dense, masked);
    os << line;
  };
  row("attention-linear", r.dense.attention_linear, r.masked.attention_linear);
  row("attention-scores", r.dense.attention_scores, r.masked.attention_scores);
  row("kv-projections", r.dense.kv_projections, r.masked.kv_projections);
  row("ffn", r.dense.ffn, r.masked.ffn);
  row("lm-head", r.dense.lm_head, r.masked.lm_head);
  row("embeddings", r.dense.embeddings, r.masked.embeddings);
  row("total", r.dense_flops, r.masked_flops);
  std::snprintf(line, sizeof(line), "percentage,%.6f,%.6f\n", 1.0, r.percentage);
  os << line;
}

}  // namespace depthroute
