// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/model.hpp"

#include <algorithm>
#include <cmath>

#include "depthroute/errors.hpp"
#include "depthroute/kernels.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {
namespace {

constexpr std::size_t kPerLayer = 9;

enum LayerSlot : std::size_t {
  kAttnNorm = 0,
  kWq,
  kWk,
  kWv,
  kWo,
  kFfnNorm,
  kWGate,
  kWUp,
  kWDown,
};

Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t({rows, cols});
  for (float& v : t.data()) v = static_cast<float>(rng.normal() * stddev);
  return t;
}

}  // namespace

std::string to_string(Granularity g) { return g == Granularity::block ? "block" : "layer"; }

Granularity parse_granularity(std::string_view text) {
  if (text == "block") return Granularity::block;
  if (text == "layer") return Granularity::layer;
  throw ConfigError("unknown granularity '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive(num_layers, "num_layers");
  positive(hidden_dim, "hidden_dim");
  positive(num_heads, "num_heads");
  positive(head_dim, "head_dim");
  positive(kv_heads, "kv_heads");
  positive(ffn_dim, "ffn_dim");
  positive(vocab_size, "vocab_size");
  positive(max_seq_len, "max_seq_len");
  if (num_heads * head_dim != hidden_dim) {
    throw ConfigError("num_heads * head_dim must equal hidden_dim");
  }
  if (kv_heads > num_heads || num_heads % kv_heads != 0) {
    throw ConfigError("num_heads must be a multiple of kv_heads");
  }
  if (head_dim % 2 != 0) throw ConfigError("head_dim must be even for rotary encoding");
  if (!(rope_theta > 0.0f) || !(norm_eps > 0.0f)) {
    throw ConfigError("rope_theta and norm_eps must be positive");
  }
}

std::size_t ModelConfig::mask_size() const {
  return granularity == Granularity::block ? 2 * num_layers : num_layers;
}

std::size_t BlockId::flat_index(Granularity g) const {
  if (g == Granularity::layer) return layer;
  return 2 * layer + (kind == BlockKind::attention ? 0 : 1);
}

BlockId BlockId::from_flat(std::size_t index) {
  return {index / 2, index % 2 == 0 ? BlockKind::attention : BlockKind::ffn};
}

std::vector<float> expand_to_blocks(std::span<const float> mask, Granularity g) {
  if (g == Granularity::block) return {mask.begin(), mask.end()};
  std::vector<float> out;
  out.reserve(mask.size() * 2);
  for (float v : mask) {
    out.push_back(v);
    out.push_back(v);
  }
  return out;
}

ModelWeights ModelWeights::random(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  const std::size_t d = config.hidden_dim;
  const double proj = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.num_layers));
  ModelWeights w;
  w.tok_emb = random_matrix(rng, config.vocab_size, d, 1.0);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    LayerWeights lw;
    lw.attn_norm = Tensor({d}, 1.0f);
    lw.wq = random_matrix(rng, d, d, proj);
    lw.wk = random_matrix(rng, d, config.kv_dim(), proj);
    lw.wv = random_matrix(rng, d, config.kv_dim(), proj);
    lw.wo = random_matrix(rng, d, d, proj * out_scale);
    lw.ffn_norm = Tensor({d}, 1.0f);
    lw.w_gate = random_matrix(rng, d, config.ffn_dim, proj);
    lw.w_up = random_matrix(rng, d, config.ffn_dim, proj);
    lw.w_down = random_matrix(rng, config.ffn_dim, d,
                              out_scale / std::sqrt(static_cast<double>(config.ffn_dim)));
    w.layers.push_back(std::move(lw));
  }
  w.final_norm = Tensor({d}, 1.0f);
  w.lm_head = random_matrix(rng, d, config.vocab_size, proj);
  return w;
}

ModelWeights ModelWeights::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden_dim;
  ModelWeights w;
  w.tok_emb = Tensor({config.vocab_size, d});
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    w.layers.push_back({Tensor({d}), Tensor({d, d}), Tensor({d, config.kv_dim()}),
                        Tensor({d, config.kv_dim()}), Tensor({d, d}), Tensor({d}),
                        Tensor({d, config.ffn_dim}), Tensor({d, config.ffn_dim}),
                        Tensor({config.ffn_dim, d})});
  }
  w.final_norm = Tensor({d});
  w.lm_head = Tensor({d, config.vocab_size});
  return w;
}

KVCache::KVCache(const ModelConfig& config)
    : kv_dim_(config.kv_dim()),
      keys_(config.num_layers),
      values_(config.num_layers),
      lengths_(config.num_layers, 0) {}

std::size_t KVCache::cached_len() const {
  if (lengths_.empty()) return 0;
  for (std::size_t len : lengths_) {
    if (len != lengths_.front()) throw CacheError("KV cache layers hold different lengths");
  }
  return lengths_.front();
}

void KVCache::append(std::size_t layer, std::span<const float> k, std::span<const float> v) {
  if (k.size() != v.size() || k.size() % kv_dim_ != 0) {
    throw CacheError("KV append with mismatched key/value sizes");
  }
  keys_[layer].insert(keys_[layer].end(), k.begin(), k.end());
  values_[layer].insert(values_[layer].end(), v.begin(), v.end());
  lengths_[layer] += k.size() / kv_dim_;
}

void KVCache::clear() {
  for (auto& k : keys_) k.clear();
  for (auto& v : values_) v.clear();
  std::fill(lengths_.begin(), lengths_.end(), 0);
}

Transformer::Transformer(ModelConfig config, ModelWeights weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  if (weights_.layers.size() != config_.num_layers) {
    throw ConfigError("weights hold " + std::to_string(weights_.layers.size()) +
                      " layers, config expects " + std::to_string(config_.num_layers));
  }
  const ModelWeights expected = ModelWeights::zeros(config_);
  std::vector<Shape> shapes;
  expected.for_each([&](const std::string&, const Tensor& t) { shapes.push_back(t.shape()); });
  std::size_t i = 0;
  weights_.for_each([&](const std::string& name, const Tensor& t) {
    if (t.shape() != shapes[i++]) {
      throw DimensionError("weight " + name + " has shape " + shape_string(t.shape()) +
                           ", expected " + shape_string(shapes[i - 1]));
    }
  });
}

Transformer Transformer::random(const ModelConfig& config, std::uint64_t seed) {
  return Transformer(config, ModelWeights::random(config, seed));
}

void Transformer::check_mask_length(std::size_t n) const {
  if (n != config_.mask_size()) {
    throw ConfigError("mask has " + std::to_string(n) + " entries, " + to_string(config_.granularity) +
                      " granularity needs " + std::to_string(config_.mask_size()));
  }
}

Transformer::WeightVars Transformer::bind(Tape& tape, bool trainable) const {
  WeightVars vars;
  weights_.for_each(
      [&](const std::string&, const Tensor& t) { vars.all.push_back(tape.leaf(t, trainable)); });
  return vars;
}

Transformer::TrainOutput Transformer::forward_train(Tape&, const WeightVars& w,
                                                    const TokenBatch& batch,
                                                    std::optional<Var> soft_mask) const {
  if (soft_mask) check_mask_length(soft_mask->value().size());
  const std::size_t seq = batch.seq_len;
  if (seq == 0 || batch.tokens.empty() || batch.tokens.size() % seq != 0) {
    throw InputError("token batch is empty or ragged");
  }
  if (seq > config_.max_seq_len) {
    throw LengthError("sequence length " + std::to_string(seq) + " exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  const std::size_t rows = batch.tokens.size();
  std::vector<std::size_t> positions(rows);
  std::vector<int> targets(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    positions[r] = r % seq;
    targets[r] = (r % seq + 1 < seq) ? batch.tokens[r + 1] : -1;
  }
  const ops::AttentionShape attn{seq, config_.num_heads, config_.kv_heads, config_.head_dim};
  const float eps = config_.norm_eps;

  auto gated = [&](Var out, const BlockId& id) {
    if (!soft_mask) return out;
    return ops::mul(out, ops::element(*soft_mask, id.flat_index(config_.granularity)));
  };

  Var x = ops::embedding(w.all[0], batch.tokens);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const Var* lw = w.all.data() + 1 + l * kPerLayer;
    Var h = ops::rmsnorm(x, lw[kAttnNorm], eps);
    Var q = ops::rope(ops::matmul(h, lw[kWq]), config_.num_heads, config_.head_dim, positions,
                      config_.rope_theta);
    Var k = ops::rope(ops::matmul(h, lw[kWk]), config_.kv_heads, config_.head_dim, positions,
                      config_.rope_theta);
    Var v = ops::matmul(h, lw[kWv]);
    Var a = ops::matmul(ops::causal_attention(q, k, v, attn), lw[kWo]);
    x = ops::add(x, gated(a, {l, BlockKind::attention}));

    Var h2 = ops::rmsnorm(x, lw[kFfnNorm], eps);
    Var act = ops::mul(ops::silu(ops::matmul(h2, lw[kWGate])), ops::matmul(h2, lw[kWUp]));
    Var f = ops::matmul(act, lw[kWDown]);
    x = ops::add(x, gated(f, {l, BlockKind::ffn}));
  }
  const std::size_t tail = 1 + config_.num_layers * kPerLayer;
  Var logits = ops::matmul(ops::rmsnorm(x, w.all[tail], eps), w.all[tail + 1]);
  Var loss = ops::cross_entropy(logits, targets);
  return {loss, logits, x};
}

Transformer::TrainOutput Transformer::forward_train(Tape& tape, const TokenBatch& batch,
                                                    std::optional<Var> soft_mask) const {
  return forward_train(tape, bind(tape, false), batch, soft_mask);
}

Tensor Transformer::forward_infer(std::span<const int> tokens, std::span<const int> binary_mask,
                                  KVCache& cache, const ResidualObserver* observer) const {
  check_mask_length(binary_mask.size());
  for (int m : binary_mask) {
    if (m != 0 && m != 1) {
      throw ContractError("binary mask entry " + std::to_string(m) + " is not 0 or 1");
    }
  }
  if (cache.num_layers() != config_.num_layers || cache.kv_dim() != config_.kv_dim()) {
    throw CacheError("KV cache was built for a different model shape");
  }
  const std::size_t start = cache.cached_len();
  const std::size_t n = tokens.size();
  if (n == 0) throw InputError("forward_infer called with no tokens");
  if (start + n > config_.max_seq_len) {
    throw LengthError("context of " + std::to_string(start + n) + " tokens exceeds max_seq_len " +
                      std::to_string(config_.max_seq_len));
  }
  const std::size_t d = config_.hidden_dim;
  const std::size_t kvd = config_.kv_dim();
  const std::size_t ff = config_.ffn_dim;
  const kernels::AttentionDims dims{config_.num_heads, config_.kv_heads, config_.head_dim};
  const float eps = config_.norm_eps;
  const Granularity gran = config_.granularity;

  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = start + i;

  std::vector<float> x(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= config_.vocab_size) {
      throw IndexError("token id " + std::to_string(tokens[i]) + " outside vocab");
    }
    const auto row = weights_.tok_emb.data().subspan(static_cast<std::size_t>(tokens[i]) * d, d);
    std::copy(row.begin(), row.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
  }

  std::vector<float> h(n * d), q(n * d), attn(n * d), out(n * d);
  std::vector<float> k(n * kvd), v(n * kvd);
  std::vector<float> gate(n * ff), up(n * ff);
  std::vector<float> before;

  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const LayerWeights& lw = weights_.layers[l];
    const BlockId attn_id{l, BlockKind::attention};
    const BlockId ffn_id{l, BlockKind::ffn};

    // K/V are always produced so later tokens can attend to this position.
    kernels::rmsnorm(x, lw.attn_norm.data(), h, n, d, eps);
    kernels::gemm(h, lw.wk.data(), k, n, d, kvd);
    kernels::gemm(h, lw.wv.data(), v, n, d, kvd);
    kernels::rope(k, n, config_.kv_heads, config_.head_dim, positions, config_.rope_theta);
    cache.append(l, k, v);

    if (binary_mask[attn_id.flat_index(gran)] == 1) {
      if (observer) before = x;
      kernels::gemm(h, lw.wq.data(), q, n, d, d);
      kernels::rope(q, n, config_.num_heads, config_.head_dim, positions, config_.rope_theta);
      kernels::attention_forward(q, cache.keys(l), cache.values(l), attn, dims, n, start + n,
                                 start);
      kernels::gemm(attn, lw.wo.data(), out, n, d, d);
      for (std::size_t i = 0; i < n * d; ++i) x[i] = x[i] + out[i];
      if (observer) (*observer)(attn_id, before, x, n);
    }

    if (binary_mask[ffn_id.flat_index(gran)] == 1) {
      if (observer) before = x;
      kernels::rmsnorm(x, lw.ffn_norm.data(), h, n, d, eps);
      kernels::gemm(h, lw.w_gate.data(), gate, n, d, ff);
      kernels::gemm(h, lw.w_up.data(), up, n, d, ff);
      for (std::size_t i = 0; i < n * ff; ++i) gate[i] = kernels::silu(gate[i]) * up[i];
      kernels::gemm(gate, lw.w_down.data(), out, n, ff, d);
      for (std::size_t i = 0; i < n * d; ++i) x[i] = x[i] + out[i];
      if (observer) (*observer)(ffn_id, before, x, n);
    }
  }

  kernels::rmsnorm(x, weights_.final_norm.data(), h, n, d, eps);
  Tensor logits({n, config_.vocab_size});
  kernels::gemm(h, weights_.lm_head.data(), logits.data(), n, d, config_.vocab_size);
  return logits;
}

std::vector<int> Transformer::generate(std::span<const int> prompt,
                                       std::span<const int> binary_mask,
                                       std::size_t steps) const {
  if (prompt.size() > config_.max_seq_len) {
    throw LengthError("prompt of " + std::to_string(prompt.size()) +
                      " tokens exceeds max_seq_len " + std::to_string(config_.max_seq_len));
  }
  std::vector<int> out(prompt.begin(), prompt.end());
  if (steps == 0 || prompt.empty()) return out;
  KVCache cache(config_);
  Tensor logits = forward_infer(prompt, binary_mask, cache);
  const std::size_t vocab = config_.vocab_size;
  for (std::size_t s = 0; s < steps; ++s) {
    const auto last = logits.data().subspan((logits.rows() - 1) * vocab, vocab);
    const int next = static_cast<int>(argmax(last));
    out.push_back(next);
    if (s + 1 == steps || out.size() >= config_.max_seq_len) break;
    const int feed[1] = {next};
    logits = forward_infer(feed, binary_mask, cache);
  }
  return out;
}

std::size_t argmax(std::span<const float> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace depthroute
