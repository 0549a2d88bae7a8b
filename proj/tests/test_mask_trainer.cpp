// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "depthroute/errors.hpp"
#include "depthroute/mask_trainer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace depthroute;
using namespace testing_helpers;

namespace {

std::vector<std::vector<int>> token_docs(std::size_t docs, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < docs; ++i) out.push_back(random_tokens(len, 20, rng));
  return out;
}

TrainingConfig small_config(std::size_t steps) {
  TrainingConfig tc;
  tc.batch_size = 2;
  tc.train_seq_len = 16;
  tc.max_steps = steps;
  return tc;
}

}  // namespace

TEST_CASE("lagrangian penalty values") {
  CHECK(lagrangian_penalty(0.3, {2.0f, 5.0f, 0.25}) == doctest::Approx(0.1125).epsilon(1e-9));
  CHECK(lagrangian_penalty(0.25, {2.0f, 5.0f, 0.25}) == 0.0);
  CHECK(lagrangian_penalty(0.25, {-7.0f, 100.0f, 0.25}) == 0.0);
}

TEST_CASE("lagrangian penalty gradients") {
  Tape tape;
  Var t = tape.leaf(Tensor::scalar(0.3f), true);
  Var l1 = tape.leaf(Tensor::scalar(2.0f), true);
  Var l2 = tape.leaf(Tensor::scalar(5.0f), true);
  Var p = lagrangian_penalty(t, l1, l2, 0.25);
  CHECK(p.item() == doctest::Approx(0.1125).epsilon(1e-6));
  tape.backward(p);
  CHECK(t.grad()[0] == doctest::Approx(2.5).epsilon(1e-5));
  CHECK(l1.grad()[0] == doctest::Approx(0.05).epsilon(1e-5));
  CHECK(l2.grad()[0] == doctest::Approx(0.0025).epsilon(1e-4));

  const double h = 1e-3;
  const double fd = (lagrangian_penalty(0.3 + h, {2.0f, 5.0f, 0.25}) -
                     lagrangian_penalty(0.3 - h, {2.0f, 5.0f, 0.25})) / (2 * h);
  CHECK(std::abs(fd - 2.5) / 2.5 < 1e-4);
}

TEST_CASE("target schedule") {
  TrainingConfig tc;
  tc.max_steps = 4000;
  tc.target_warmup_steps = 1000;
  CHECK(scheduled_target(tc, 0.25, 0) == 0.0);
  CHECK(scheduled_target(tc, 0.25, 500) == doctest::Approx(0.125));
  CHECK(scheduled_target(tc, 0.25, 1000) == 0.25);
  tc.max_steps = 400;
  CHECK(scheduled_target(tc, 0.25, 100) == doctest::Approx(0.125));
  CHECK(scheduled_target(tc, 0.25, 200) == 0.25);
  tc.target_warmup_steps = 0;
  CHECK(scheduled_target(tc, 0.25, 0) == 0.25);
}

TEST_CASE("one step with t above target raises lambda1") {
  const Transformer m = Transformer::random(tiny_config(), 1);
  const auto data = token_docs(3, 20, 2);
  TrainingConfig tc = small_config(1);
  tc.target_warmup_steps = 0;
  for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
    tc.lagrangian_optimizer = kind;
    SparsityController ctrl;
    ctrl.s_target = 0.0;  // any gate has t > 0
    const auto r = train_cluster_mask(m, data, tc, ctrl);
    CHECK(r.log[0].expected_sparsity > 0.0);
    CHECK(r.controller.lambda1 > 0.0f);
  }
}

TEST_CASE("penalty alone drives expected sparsity to the target within 500 steps") {
  const Transformer m = Transformer::random(tiny_config(4), 1);
  const auto data = token_docs(2, 20, 3);
  for (double target : {0.25, 0.5}) {
    TrainingConfig tc = small_config(500);
    tc.include_lm_loss = false;
    tc.target_warmup_steps = 0;
    SparsityController ctrl;
    ctrl.s_target = target;
    const auto r = train_cluster_mask(m, data, tc, ctrl);
    CHECK(std::abs(r.log.back().expected_sparsity - target) <= 0.01);
  }
}

TEST_CASE("training never touches model weights") {
  const Transformer m = Transformer::random(tiny_config(), 5);
  const std::string before = m.fingerprint();
  const auto data = token_docs(4, 24, 6);
  SparsityController ctrl;
  ctrl.s_target = 0.5;
  train_cluster_mask(m, data, small_config(30), ctrl);
  CHECK(m.fingerprint() == before);
}

TEST_CASE("identical seeds give bit-identical candidates") {
  const Transformer m = Transformer::random(tiny_config(), 7);
  const auto data = token_docs(4, 24, 8);
  SparsityController ctrl;
  ctrl.s_target = 0.25;
  TrainingConfig tc = small_config(40);
  tc.seed = 9;
  const auto a = train_cluster_mask(m, data, tc, ctrl, 2);
  const auto b = train_cluster_mask(m, data, tc, ctrl, 2);
  CHECK(a.candidate.gate.log_alpha == b.candidate.gate.log_alpha);
  CHECK(a.candidate.binary_mask == b.candidate.binary_mask);
  CHECK(a.controller.lambda1 == b.controller.lambda1);
  const auto c = train_cluster_mask(m, data, tc, ctrl, 3);
  CHECK(a.candidate.gate.log_alpha != c.candidate.gate.log_alpha);
}

TEST_CASE("candidate fields") {
  const Transformer m = Transformer::random(tiny_config(), 10);
  const auto data = token_docs(2, 24, 11);
  SparsityController ctrl;
  ctrl.s_target = 0.5;
  const auto r = train_cluster_mask(m, data, small_config(5), ctrl, 4, {0.6f, 0.8f});
  CHECK(r.candidate.cluster_id == 4);
  CHECK(r.candidate.centroid == std::vector<float>{0.6f, 0.8f});
  CHECK(r.candidate.binary_mask.size() == 4);
  CHECK(r.candidate.achieved_sparsity == 0.5);
  CHECK(r.log.size() == 5);
}

TEST_CASE("mask trainer errors") {
  const Transformer m = Transformer::random(tiny_config(), 12);
  SparsityController ctrl;
  ctrl.s_target = 0.25;
  std::vector<std::vector<int>> empty;
  CHECK_THROWS_AS(train_cluster_mask(m, empty, small_config(5), ctrl), ConfigError);
  const auto data = token_docs(2, 24, 13);
  ctrl.s_target = 1.0;
  CHECK_THROWS_AS(train_cluster_mask(m, data, small_config(5), ctrl), ConfigError);
  ctrl.s_target = 0.25;
  TrainingConfig tc = small_config(5);
  tc.gate_lr = 0.0f;
  CHECK_THROWS_AS(train_cluster_mask(m, data, tc, ctrl), ConfigError);
  Transformer broken = m;
  broken.mutable_weights().lm_head[3] = std::nanf("");
  CHECK_THROWS_AS(train_cluster_mask(broken, data, small_config(3), ctrl), TrainingError);
}

TEST_CASE("training log csv") {
  std::vector<TrainingLogRow> rows = {{0, 1.5, 0.25, 0.125, -0.5, 2.0}};
  std::ostringstream os;
  write_training_log_csv(os, rows);
  CHECK(os.str() == "step,lm_loss,penalty,expected_sparsity,lambda1,lambda2\n0,1.5,0.25,0.125,-0.5,2\n");
}

TEST_CASE("packed batch sampling") {
  std::vector<std::vector<int>> seqs = {{1, 2, 3}, {4, 5}};
  Rng rng(1);
  const auto b = sample_packed_batch(seqs, 3, 4, rng);
  CHECK(b.seq_len == 4);
  CHECK(b.tokens.size() == 12);
  const auto whole = sample_packed_batch(seqs, 1, 100, rng);
  CHECK(whole.seq_len == 5);
  CHECK(whole.tokens == std::vector<int>{1, 2, 3, 4, 5});
}
