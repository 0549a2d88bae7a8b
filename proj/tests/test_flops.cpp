// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "depthroute/errors.hpp"
#include "depthroute/flops.hpp"
#include "depthroute/kernels.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace depthroute;
using namespace testing_helpers;

namespace {

ArchDesc hand_arch() {
  ArchDesc a;
  a.num_layers = 2;
  a.hidden_dim = 8;
  a.ffn_dim = 16;
  a.kv_dim = 8;  // two heads of width 4, no grouping
  a.vocab_size = 10;
  return a;
}

std::vector<int> attention_skips(std::size_t layers, std::size_t skipped) {
  std::vector<int> mask(2 * layers, 1);
  for (std::size_t i = 0; i < skipped; ++i) mask[2 * (layers - 1 - i)] = 0;
  return mask;
}

}  // namespace

TEST_CASE("hand-computed count for a tiny architecture") {
  // per layer at s=4: Q,O 4*4*64=1024, K,V 4*4*8*8=1024, scores 4*16*8=512, FFN 6*4*8*16=3072
  // two layers 11264, LM head 2*4*8*10=640
  const FlopsReport r = dense_flops(hand_arch(), 4);
  CHECK(r.dense_flops == 11904.0);
  CHECK(r.dense.attention_linear == 2048.0);
  CHECK(r.dense.kv_projections == 2048.0);
  CHECK(r.dense.attention_scores == 1024.0);
  CHECK(r.dense.ffn == 6144.0);
  CHECK(r.dense.lm_head == 640.0);
  CHECK(r.dense.embeddings == 0.0);
  CHECK(r.percentage == 1.0);
  // causal pairs: 4*8*(4*5/2) = 320 per layer
  CHECK(dense_flops(hand_arch(), 4, ScoreCounting::causal).dense_flops == 11520.0);
}

TEST_CASE("Llama-3-8B dense count at 2048 tokens") {
  const FlopsReport r = dense_flops(ArchDesc::llama3_8b(), 2048);
  CHECK(std::abs(r.dense_flops / 32.94e12 - 1.0) <= 0.015);
  const auto mask = attention_skips(32, 16);
  const FlopsReport m = masked_flops(ArchDesc::llama3_8b(), 2048, mask, Granularity::block);
  CHECK(m.percentage >= 0.89);
  CHECK(m.percentage <= 0.91);
}

TEST_CASE("masking rules") {
  const ArchDesc a = hand_arch();
  const std::size_t s = 4;
  const double dense = dense_flops(a, s).dense_flops;
  CHECK(masked_flops(a, s, std::vector<int>(4, 1), Granularity::block).masked_flops == dense);
  CHECK(masked_flops(a, s, std::vector<int>{1, 0, 1, 1}, Granularity::block).masked_flops ==
        dense - 6.0 * s * 8 * 16);
  // a skipped attention block keeps its K/V projections
  const FlopsReport att = masked_flops(a, s, std::vector<int>{0, 1, 1, 1}, Granularity::block);
  CHECK(att.masked_flops == dense - 1024.0 - 512.0);
  CHECK(att.masked.kv_projections == att.dense.kv_projections);
  CHECK(masked_flops(a, s, std::vector<int>{0, 1}, Granularity::layer).masked_flops ==
        dense - 1024.0 - 512.0 - 3072.0);
  CHECK_THROWS_AS(masked_flops(a, s, std::vector<int>{1, 1, 1}, Granularity::block), ConfigError);
  CHECK_THROWS_AS(dense_flops(a, 0), ConfigError);
}

TEST_CASE("breakdown is structural") {
  ArchDesc a = ArchDesc::llama3_8b();
  ArchDesc wide = a;
  wide.ffn_dim *= 2;
  const auto r1 = dense_flops(a, 512), r2 = dense_flops(wide, 512);
  CHECK(r2.dense.ffn > r1.dense.ffn);
  CHECK(r2.dense.attention_linear == r1.dense.attention_linear);
  CHECK(r2.dense.attention_scores == r1.dense.attention_scores);
  CHECK(r2.dense.kv_projections == r1.dense.kv_projections);
  CHECK(r1.dense.total() == r1.dense_flops);
}

TEST_CASE("monotone and decomposable over random masks") {
  Rng rng(4);
  const ArchDesc a = ArchDesc::llama3_8b();
  const std::size_t s = 777;
  for (int trial = 0; trial < 200; ++trial) {
    auto mask = random_mask(64, rng);
    const FlopsReport r = masked_flops(a, s, mask, Granularity::block);
    double expect = r.dense_flops;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] == 0) expect -= removable_flops(a, s, BlockId::from_flat(i).kind);
    }
    CHECK(std::abs(r.masked_flops - expect) <= 1e-9 * r.dense_flops);
    CHECK(r.masked.total() == doctest::Approx(r.masked_flops).epsilon(1e-12));
    CHECK(r.percentage > 0.0);
    CHECK(r.percentage <= 1.0);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] == 0) continue;
      auto fewer = mask;
      fewer[i] = 0;
      CHECK(masked_flops(a, s, fewer, Granularity::block).masked_flops <= r.masked_flops);
    }
  }
}

TEST_CASE("counted kernel work matches the analytic model") {
  ModelConfig cfg = tiny_config(3);
  cfg.max_seq_len = 64;
  const Transformer m = Transformer::random(cfg, 3);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t s = 8 + rng.below(50);
    const auto tokens = random_tokens(s, cfg.vocab_size, rng);
    const auto mask = random_mask(m.mask_size(), rng);
    KVCache cache(cfg);
    std::uint64_t counted = 0;
    {
      kernels::FlopCounting counter;
      const std::uint64_t before = counter.flops();
      m.forward_infer(tokens, mask, cache);
      counted = counter.flops() - before;
    }
    const double analytic =
        masked_flops(ArchDesc::from(cfg), s, mask, Granularity::block, ScoreCounting::causal)
            .masked_flops;
    CHECK(std::abs(double(counted) / analytic - 1.0) <= 0.01);
  }
}

TEST_CASE("report writers") {
  const FlopsReport r = masked_flops(hand_arch(), 4, std::vector<int>{1, 0, 1, 1}, Granularity::block);
  std::ostringstream table, csv;
  write_flops_table(table, r);
  write_flops_csv(csv, r);
  CHECK(table.str().find("1.190400e+04") != std::string::npos);
  CHECK(csv.str().rfind("component,", 0) == 0);
}
