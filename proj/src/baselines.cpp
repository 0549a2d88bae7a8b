// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "depthroute/errors.hpp"
#include "depthroute/evaluation.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {
namespace {

double row_cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return na == nb ? 1.0 : 0.0;
  return dot / std::sqrt(na * nb);
}

void check_remove(std::size_t num_remove, std::size_t b) {
  if (num_remove >= b) {
    throw ConfigError("num_remove " + std::to_string(num_remove) + " must be below B = " +
                      std::to_string(b));
  }
}

double calib_ppl(const Transformer& model, std::span<const int> mask,
                 std::span<const std::vector<int>> calib) {
  return evaluate_masked_ppl(model, mask, calib);
}

}  // namespace

std::vector<double> block_io_similarity(const Transformer& model, std::span<const int> mask,
                                        std::span<const std::vector<int>> calib) {
  const ModelConfig& cfg = model.config();
  const Granularity g = cfg.granularity;
  const std::size_t b = cfg.mask_size();
  const std::size_t d = cfg.hidden_dim;
  std::vector<double> sum(b, 0.0);
  std::vector<std::size_t> count(b, 0);
  std::vector<float> layer_input;
  ResidualObserver obs = [&](const BlockId& id, std::span<const float> before,
                             std::span<const float> after, std::size_t rows) {
    std::span<const float> in = before;
    if (g == Granularity::layer) {
      // a layer spans attention then FFN; both run or neither does
      if (id.kind == BlockKind::attention) {
        layer_input.assign(before.begin(), before.end());
        return;
      }
      in = layer_input;
    }
    const std::size_t f = id.flat_index(g);
    for (std::size_t r = 0; r < rows; ++r) {
      sum[f] += row_cosine(in.subspan(r * d, d), after.subspan(r * d, d));
      ++count[f];
    }
  };
  for (const auto& seq : calib) {
    const std::size_t n = std::min(seq.size(), cfg.max_seq_len);
    if (n == 0) continue;
    KVCache cache(cfg);
    model.forward_infer(std::span<const int>(seq).first(n), mask, cache, &obs);
  }
  std::vector<double> out(b, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t f = 0; f < b; ++f) {
    if (count[f] > 0) out[f] = sum[f] / static_cast<double>(count[f]);
  }
  return out;
}

StaticMaskResult sleb_prune(const Transformer& model, std::span<const std::vector<int>> calib,
                            std::size_t num_remove) {
  const std::size_t b = model.mask_size();
  check_remove(num_remove, b);
  StaticMaskResult res{"sleb", BinaryMask(b, 1), {}};
  for (std::size_t step = 0; step < num_remove; ++step) {
    const std::vector<double> sim = block_io_similarity(model, res.binary_mask, calib);
    std::size_t best = b;
    for (std::size_t f = 0; f < b; ++f) {
      if (res.binary_mask[f] == 0 || std::isnan(sim[f])) continue;
      if (best == b || sim[f] > sim[best]) best = f;
    }
    if (best == b) throw TrainingError("no calibration signal for sleb scoring");
    res.binary_mask[best] = 0;
    res.score_trace.push_back(sim[best]);
  }
  return res;
}

StaticMaskResult oneshot_importance_prune(const Transformer& model,
                                          std::span<const std::vector<int>> calib,
                                          std::size_t num_remove) {
  const std::size_t b = model.mask_size();
  check_remove(num_remove, b);
  StaticMaskResult res{"oneshot-ppl", BinaryMask(b, 1), std::vector<double>(b, 0.0)};
  if (num_remove == 0) return res;
  for (std::size_t f = 0; f < b; ++f) {
    BinaryMask m(b, 1);
    m[f] = 0;
    res.score_trace[f] = calib_ppl(model, m, calib);
  }
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return res.score_trace[x] < res.score_trace[y];
  });
  for (std::size_t i = 0; i < num_remove; ++i) res.binary_mask[order[i]] = 0;
  return res;
}

std::size_t zeros_for_sparsity(double target_sparsity, std::size_t mask_size) {
  if (!(target_sparsity >= 0.0 && target_sparsity < 1.0)) {
    throw ConfigError("target sparsity must lie in [0, 1)");
  }
  return static_cast<std::size_t>(std::llround(target_sparsity * static_cast<double>(mask_size)));
}

StaticMaskResult evopress_search(const Transformer& model, std::span<const std::vector<int>> calib,
                                 double target_sparsity, const EvoPressOptions& opt) {
  if (opt.generations > 0 && opt.offspring_per_survivor == 0) {
    throw ConfigError("offspring_per_survivor must be >= 1");
  }
  if (opt.population == 0) throw ConfigError("population must be >= 1");
  const std::size_t b = model.mask_size();
  const std::size_t k = zeros_for_sparsity(target_sparsity, b);
  Rng rng(mix_seed(opt.seed, 0xe70b));

  std::map<BinaryMask, double> fitness;
  auto fit = [&](const BinaryMask& m) {
    auto it = fitness.find(m);
    if (it != fitness.end()) return it->second;
    const double f = calib_ppl(model, m, calib);
    fitness.emplace(m, f);
    return f;
  };
  // lower fitness first; the mask itself breaks ties so ordering is total
  auto better = [&](const BinaryMask& x, const BinaryMask& y) {
    const double fx = fit(x), fy = fit(y);
    if (fx != fy) return fx < fy;
    return x > y;
  };
  auto select = [&](std::vector<BinaryMask> pool) {
    std::sort(pool.begin(), pool.end(), better);
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    if (pool.size() > opt.population) pool.resize(opt.population);
    return pool;
  };

  std::vector<BinaryMask> pop;
  for (std::size_t i = 0; i < opt.population; ++i) {
    std::vector<std::size_t> idx(b);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t j = 0; j < k; ++j) std::swap(idx[j], idx[j + rng.below(b - j)]);
    BinaryMask m(b, 1);
    for (std::size_t j = 0; j < k; ++j) m[idx[j]] = 0;
    pop.push_back(std::move(m));
  }
  pop = select(std::move(pop));
  StaticMaskResult res{"evopress", pop.front(), {fit(pop.front())}};

  for (std::size_t gen = 0; gen < opt.generations; ++gen) {
    std::vector<BinaryMask> pool = pop;
    if (k > 0 && k < b) {
      for (const auto& parent : pop) {
        std::vector<std::size_t> zeros, ones;
        for (std::size_t f = 0; f < b; ++f) (parent[f] == 0 ? zeros : ones).push_back(f);
        for (std::size_t o = 0; o < opt.offspring_per_survivor; ++o) {
          BinaryMask child = parent;
          std::swap(child[zeros[rng.below(zeros.size())]], child[ones[rng.below(ones.size())]]);
          pool.push_back(std::move(child));
        }
      }
    }
    pop = select(std::move(pool));
    res.binary_mask = pop.front();
    res.score_trace.push_back(fit(pop.front()));
  }
  return res;
}

MaskLibrary static_mask_library(const StaticMaskResult& result, const Transformer& model,
                                const EncoderConfig& encoder, double target_sparsity) {
  MaskLibrary lib;
  lib.model_fingerprint = model.fingerprint();
  lib.encoder = encoder;
  lib.granularity = model.config().granularity;
  lib.target_sparsity = target_sparsity;
  MaskCandidate c;
  c.cluster_id = 0;
  c.centroid.assign(encoder.dim, 0.0f);
  c.binary_mask = result.binary_mask;
  c.achieved_sparsity = zero_fraction(result.binary_mask);
  lib.candidates.push_back(std::move(c));
  lib.metadata["method"] = result.method;
  lib.validate();
  return lib;
}

}  // namespace depthroute
