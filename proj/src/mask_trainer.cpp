// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/mask_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "depthroute/errors.hpp"
#include "depthroute/optim.hpp"

namespace depthroute {

void TrainingConfig::validate() const {
  if (batch_size == 0 || max_steps == 0 || train_seq_len < 2) {
    throw ConfigError("training config needs batch_size, max_steps >= 1 and train_seq_len >= 2");
  }
  if (!(gate_lr > 0.0f) || !(lagrangian_lr > 0.0f)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(adam_beta2 > 0.0f && adam_beta2 < 1.0f)) throw ConfigError("adam_beta2 must lie in (0, 1)");
}

double scheduled_target(const TrainingConfig& cfg, double s_target, std::size_t step) {
  const std::size_t warmup = std::min(cfg.target_warmup_steps, cfg.max_steps / 2);
  if (warmup == 0 || step >= warmup) return s_target;
  return s_target * static_cast<double>(step) / static_cast<double>(warmup);
}

double lagrangian_penalty(double t, const SparsityController& ctrl) {
  const double gap = t - ctrl.s_target;
  return ctrl.lambda1 * gap + ctrl.lambda2 * gap * gap;
}

Var lagrangian_penalty(Var t, Var lambda1, Var lambda2, double s_target) {
  Var gap = ops::scale(t, 1.0f, static_cast<float>(-s_target));
  return ops::add(ops::mul(lambda1, gap), ops::mul(lambda2, ops::mul(gap, gap)));
}

TokenBatch sample_packed_batch(std::span<const std::vector<int>> sequences,
                               std::size_t batch_size, std::size_t seq_len, Rng& rng) {
  std::vector<int> stream;
  for (const auto& s : sequences) stream.insert(stream.end(), s.begin(), s.end());
  if (stream.size() < 2) throw ConfigError("cluster data holds fewer than two tokens");
  TokenBatch batch;
  batch.seq_len = std::min(seq_len, stream.size());
  batch.tokens.reserve(batch_size * batch.seq_len);
  const std::size_t span = stream.size() - batch.seq_len + 1;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t start = rng.below(span);
    batch.tokens.insert(batch.tokens.end(), stream.begin() + static_cast<std::ptrdiff_t>(start),
                        stream.begin() + static_cast<std::ptrdiff_t>(start + batch.seq_len));
  }
  return batch;
}

MaskTrainingResult train_cluster_mask(const Transformer& model,
                                      std::span<const std::vector<int>> cluster_data,
                                      const TrainingConfig& cfg, SparsityController ctrl,
                                      std::size_t cluster_id, std::vector<float> centroid) {
  cfg.validate();
  if (cluster_data.empty()) throw ConfigError("cluster " + std::to_string(cluster_id) + " has no data");
  if (!(ctrl.s_target >= 0.0 && ctrl.s_target < 1.0)) {
    throw ConfigError("s_target must lie in [0, 1)");
  }

  GateParams gate = GateParams::initial(model.mask_size(), cfg.log_alpha_init);
  gate.validate();
  Rng rng(mix_seed(cfg.seed, cluster_id));
  GroupOptimizer gate_opt(cfg.gate_optimizer, gate.size(), cfg.gate_lr, false, cfg.adam_beta2);
  GroupOptimizer lambda_opt(cfg.lagrangian_optimizer, 2, cfg.lagrangian_lr, true,
                            cfg.adam_beta2);
  std::vector<float> lambdas = {ctrl.lambda1, ctrl.lambda2};

  MaskTrainingResult result;
  result.log.reserve(cfg.max_steps);
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    Tape tape;
    Var log_alpha = tape.leaf(Tensor::vector(gate.log_alpha), true);
    Var l1 = tape.leaf(Tensor::scalar(lambdas[0]), true);
    Var l2 = tape.leaf(Tensor::scalar(lambdas[1]), true);
    TrainingLogRow row;
    row.step = step;
    try {
      Var z = sample_soft_mask(log_alpha, gate, rng);
      Var t = expected_sparsity(log_alpha, gate);
      Var penalty = lagrangian_penalty(t, l1, l2, scheduled_target(cfg, ctrl.s_target, step));
      Var total = penalty;
      if (cfg.include_lm_loss) {
        const TokenBatch batch =
            sample_packed_batch(cluster_data, cfg.batch_size, cfg.train_seq_len, rng);
        Var lm = model.forward_train(tape, batch, z).loss;
        row.lm_loss = lm.item();
        total = ops::add(lm, penalty);
      }
      row.penalty = penalty.item();
      row.expected_sparsity = t.item();
      tape.backward(total);
    } catch (const DomainError& e) {
      throw TrainingError("cluster " + std::to_string(cluster_id) + " step " +
                          std::to_string(step) + ": " + e.what());
    }
    row.lambda1 = lambdas[0];
    row.lambda2 = lambdas[1];
    result.log.push_back(row);

    gate_opt.step(gate.log_alpha, log_alpha.grad());

    const float lambda_grads[2] = {l1.grad()[0], l2.grad()[0]};
    lambda_opt.step(lambdas, lambda_grads);
    for (float v : gate.log_alpha) {
      if (!std::isfinite(v)) {
        throw TrainingError("cluster " + std::to_string(cluster_id) + " step " +
                            std::to_string(step) + ": log_alpha diverged");
      }
    }
  }

  ctrl.lambda1 = lambdas[0];
  ctrl.lambda2 = lambdas[1];
  result.controller = ctrl;
  result.candidate.cluster_id = cluster_id;
  result.candidate.centroid = std::move(centroid);
  result.candidate.binary_mask = binarize(gate, ctrl.s_target);
  result.candidate.achieved_sparsity = zero_fraction(result.candidate.binary_mask);
  result.candidate.gate = std::move(gate);
  return result;
}

void write_training_log_csv(std::ostream& os, std::span<const TrainingLogRow> rows) {
  os << "step,lm_loss,penalty,expected_sparsity,lambda1,lambda2\n";
  const auto old = os.precision(9);
  for (const auto& r : rows) {
    os << r.step << ',' << r.lm_loss << ',' << r.penalty << ',' << r.expected_sparsity << ','
       << r.lambda1 << ',' << r.lambda2 << '\n';
  }
  os.precision(old);
}

}  // namespace depthroute
