// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "depthroute/model.hpp"
#include "depthroute/rng.hpp"

namespace testing_helpers {

using namespace depthroute;

inline ModelConfig tiny_config(std::size_t layers = 2) {
  ModelConfig c;
  c.num_layers = layers;
  c.hidden_dim = 16;
  c.num_heads = 4;
  c.head_dim = 4;
  c.kv_heads = 2;
  c.ffn_dim = 24;
  c.vocab_size = 20;
  c.max_seq_len = 32;
  return c;
}

inline std::vector<int> random_tokens(std::size_t n, std::size_t vocab, Rng& rng) {
  std::vector<int> t(n);
  for (int& x : t) x = static_cast<int>(rng.below(vocab));
  return t;
}

inline std::vector<int> random_mask(std::size_t b, Rng& rng) {
  std::vector<int> m(b);
  for (int& x : m) x = static_cast<int>(rng.below(2));
  return m;
}

inline std::vector<float> to_float(const std::vector<int>& m) {
  return std::vector<float>(m.begin(), m.end());
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

/// Logits from forward_train with `mask` applied as block-output scaling.
inline Tensor train_logits(const Transformer& model, const std::vector<int>& tokens,
                           const std::vector<float>& mask) {
  Tape tape;
  TokenBatch batch{tokens.size(), tokens};
  Var m = tape.leaf(Tensor::vector(mask), false);
  return model.forward_train(tape, batch, m).logits.value();
}

}  // namespace testing_helpers
