// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace depthroute {

/// Adam over one flat parameter group. `ascend` flips the update direction,
/// which turns it into gradient ascent (used for Lagrange multipliers).
class Adam {
 public:
  struct Options {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    bool ascend = false;
  };

  Adam(std::size_t size, Options options);

  void step(std::span<float> params, std::span<const float> grads);
  void set_lr(float lr) { options_.lr = lr; }
  std::size_t steps() const { return t_; }

 private:
  Options options_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

/// Plain gradient descent (or ascent) with a fixed rate.
class Sgd {
 public:
  Sgd(float lr, bool ascend) : lr_(lr), ascend_(ascend) {}
  void step(std::span<float> params, std::span<const float> grads) const;

 private:
  float lr_;
  bool ascend_;
};

enum class OptimizerKind { sgd, adam };

OptimizerKind parse_optimizer_kind(const std::string& s);
const char* to_string(OptimizerKind k);

/// Either optimizer behind one interface.
class GroupOptimizer {
 public:
  GroupOptimizer(OptimizerKind kind, std::size_t size, float lr, bool ascend,
                 float beta2 = 0.999f);
  void step(std::span<float> params, std::span<const float> grads);

 private:
  OptimizerKind kind_;
  Sgd sgd_;
  Adam adam_;
};

}  // namespace depthroute
