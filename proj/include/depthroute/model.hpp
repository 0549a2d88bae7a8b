// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only pre-norm transformer (RMSNorm, rotary grouped-query attention,
// SwiGLU FFN) whose attention and FFN blocks each carry a multiplicative gate.
//
// Two execution paths share the same kernels:
//   forward_train  records on a Tape; the gate is a soft scale on block outputs.
//   forward_infer  runs a binary mask with a KV cache. A skipped FFN is not
//                  computed. A skipped attention block still computes the
//                  pre-norm and the K/V projections so the cache stays aligned,
//                  but skips Q, scores, value mixing and the output projection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthroute/tensor.hpp"
#include "depthroute/tokenizer.hpp"

namespace depthroute {

enum class Granularity { block, layer };
enum class BlockKind { attention, ffn };

std::string to_string(Granularity g);
Granularity parse_granularity(std::string_view text);

struct ModelConfig {
  std::size_t num_layers = 4;
  std::size_t hidden_dim = 128;
  std::size_t num_heads = 4;
  std::size_t head_dim = 32;
  std::size_t kv_heads = 2;
  std::size_t ffn_dim = 256;
  std::size_t vocab_size = ByteTokenizer::kVocabSize;
  std::size_t max_seq_len = 512;
  Granularity granularity = Granularity::block;
  float rope_theta = 10000.0f;
  float norm_eps = 1e-5f;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
  std::size_t kv_dim() const { return kv_heads * head_dim; }
  /// Number of gateable blocks, always 2·num_layers.
  std::size_t num_blocks() const { return 2 * num_layers; }
  /// Mask length for the configured granularity (B).
  std::size_t mask_size() const;

  bool operator==(const ModelConfig&) const = default;
};

struct BlockId {
  std::size_t layer = 0;
  BlockKind kind = BlockKind::attention;

  /// 2·layer + kind under block granularity; layer under layer granularity.
  std::size_t flat_index(Granularity g) const;
  /// Inverse of flat_index for block granularity.
  static BlockId from_flat(std::size_t index);

  bool operator==(const BlockId&) const = default;
};

/// Expands a layer-granularity mask to one entry per block; copies a block mask.
std::vector<float> expand_to_blocks(std::span<const float> mask, Granularity g);

struct LayerWeights {
  Tensor attn_norm, wq, wk, wv, wo;
  Tensor ffn_norm, w_gate, w_up, w_down;
};

struct ModelWeights {
  Tensor tok_emb;
  std::vector<LayerWeights> layers;
  Tensor final_norm;
  Tensor lm_head;

  static ModelWeights random(const ModelConfig& config, std::uint64_t seed);
  /// Zero-filled weights with the right shapes for `config`.
  static ModelWeights zeros(const ModelConfig& config);

  /// Visits every tensor with its checkpoint name, in a fixed order.
  template <class F>
  void for_each(F&& fn) {
    visit(*this, fn);
  }
  template <class F>
  void for_each(F&& fn) const {
    visit(*this, fn);
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& fn) {
    fn(std::string("tok_emb"), self.tok_emb);
    for (std::size_t i = 0; i < self.layers.size(); ++i) {
      auto& l = self.layers[i];
      const std::string p = "layers." + std::to_string(i) + ".";
      fn(p + "attn_norm", l.attn_norm);
      fn(p + "wq", l.wq);
      fn(p + "wk", l.wk);
      fn(p + "wv", l.wv);
      fn(p + "wo", l.wo);
      fn(p + "ffn_norm", l.ffn_norm);
      fn(p + "w_gate", l.w_gate);
      fn(p + "w_up", l.w_up);
      fn(p + "w_down", l.w_down);
    }
    fn(std::string("final_norm"), self.final_norm);
    fn(std::string("lm_head"), self.lm_head);
  }
};

/// Equal-length token sequences packed row-major.
struct TokenBatch {
  std::size_t seq_len = 0;
  std::vector<int> tokens;

  std::size_t batch_size() const { return seq_len == 0 ? 0 : tokens.size() / seq_len; }
};

/// Per-layer key/value store for incremental decoding.
class KVCache {
 public:
  explicit KVCache(const ModelConfig& config);

  /// Tokens seen so far; throws CacheError if layers disagree.
  std::size_t cached_len() const;
  std::size_t layer_len(std::size_t layer) const { return lengths_.at(layer); }
  std::size_t num_layers() const { return lengths_.size(); }
  std::size_t kv_dim() const { return kv_dim_; }

  std::span<const float> keys(std::size_t layer) const { return keys_[layer]; }
  std::span<const float> values(std::size_t layer) const { return values_[layer]; }
  void append(std::size_t layer, std::span<const float> k, std::span<const float> v);
  void clear();

 private:
  std::size_t kv_dim_;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  std::vector<std::size_t> lengths_;
};

/// Called by forward_infer around every executed block with the residual
/// stream before and after it ([rows × hidden_dim]).
using ResidualObserver = std::function<void(const BlockId& block, std::span<const float> before,
                                            std::span<const float> after, std::size_t rows)>;

class Transformer {
 public:
  Transformer(ModelConfig config, ModelWeights weights);
  static Transformer random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ModelWeights& weights() const { return weights_; }
  ModelWeights& mutable_weights() { return weights_; }
  std::size_t mask_size() const { return config_.mask_size(); }

  /// SHA-256 over the configuration and every weight tensor (hex).
  std::string fingerprint() const;

  /// Tape leaves for every weight, in ModelWeights::for_each order.
  struct WeightVars {
    std::vector<Var> all;
  };
  WeightVars bind(Tape& tape, bool trainable) const;

  struct TrainOutput {
    Var loss;    // next-token cross-entropy, mean over predicted positions
    Var logits;  // [rows × vocab]
    Var hidden;  // residual stream before the final norm
  };
  /// soft_mask must hold mask_size() entries; nullopt runs the ungated model.
  TrainOutput forward_train(Tape& tape, const WeightVars& w, const TokenBatch& batch,
                            std::optional<Var> soft_mask) const;
  /// Binds frozen weights onto `tape` and runs forward_train.
  TrainOutput forward_train(Tape& tape, const TokenBatch& batch,
                            std::optional<Var> soft_mask) const;

  /// Feeds `tokens` at positions cache.cached_len().. and returns their
  /// logits [tokens × vocab]. Entries of binary_mask must be 0 or 1.
  Tensor forward_infer(std::span<const int> tokens, std::span<const int> binary_mask,
                       KVCache& cache, const ResidualObserver* observer = nullptr) const;

  /// Greedy decoding with an incremental cache. Stops early at max_seq_len.
  std::vector<int> generate(std::span<const int> prompt, std::span<const int> binary_mask,
                            std::size_t steps) const;

 private:
  void check_mask_length(std::size_t n) const;

  ModelConfig config_;
  ModelWeights weights_;
};

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const float> values);

}  // namespace depthroute
