// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/base_trainer.hpp"

#include <cmath>
#include <numbers>

#include "depthroute/errors.hpp"
#include "depthroute/mask_trainer.hpp"
#include "depthroute/optim.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {

void BaseTrainConfig::validate() const {
  if (steps == 0 || batch_size == 0 || seq_len < 2) {
    throw ConfigError("base training needs steps, batch_size >= 1 and seq_len >= 2");
  }
  if (!(lr > 0.0f)) throw ConfigError("base training lr must be positive");
}

float scheduled_lr(const BaseTrainConfig& cfg, std::size_t step) {
  if (step < cfg.warmup) {
    return cfg.lr * static_cast<float>(step + 1) / static_cast<float>(cfg.warmup);
  }
  const double span = static_cast<double>(std::max<std::size_t>(1, cfg.steps - cfg.warmup));
  const double p = std::min(1.0, static_cast<double>(step - cfg.warmup) / span);
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * p));
  return static_cast<float>(cfg.lr * (cfg.min_lr_ratio + (1.0 - cfg.min_lr_ratio) * c));
}

BaseTrainResult train_base_model(Transformer& model, std::span<const std::vector<int>> data,
                                 const BaseTrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("base training data is empty");
  const std::size_t seq = std::min(cfg.seq_len, model.config().max_seq_len);
  Rng rng(mix_seed(cfg.seed, 0xba5e));

  std::vector<Tensor*> params;
  model.mutable_weights().for_each([&](const std::string&, Tensor& t) { params.push_back(&t); });
  std::vector<Adam> opts;
  opts.reserve(params.size());
  for (Tensor* p : params) opts.emplace_back(p->size(), Adam::Options{.lr = cfg.lr});

  BaseTrainResult result;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const TokenBatch batch = sample_packed_batch(data, cfg.batch_size, seq, rng);
    Tape tape;
    const auto w = model.bind(tape, true);
    const auto out = model.forward_train(tape, w, batch, std::nullopt);
    tape.backward(out.loss);
    result.losses.push_back(out.loss.item());

    double norm2 = 0.0;
    for (const Var& v : w.all) {
      for (float g : v.grad()) norm2 += static_cast<double>(g) * g;
    }
    const double norm = std::sqrt(norm2);
    if (!std::isfinite(norm)) {
      throw TrainingError("base training step " + std::to_string(step) + ": gradient not finite");
    }
    const float scale =
        cfg.clip_norm > 0.0f && norm > cfg.clip_norm ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;
    const float lr = scheduled_lr(cfg, step);
    std::vector<float> g;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto grad = w.all[i].grad();
      g.assign(grad.begin(), grad.end());
      for (float& x : g) x *= scale;
      opts[i].set_lr(lr);
      opts[i].step(params[i]->data(), g);
    }
  }
  return result;
}

}  // namespace depthroute
