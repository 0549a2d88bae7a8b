// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/optim.hpp"

#include <cmath>

#include "depthroute/errors.hpp"

namespace depthroute {

Adam::Adam(std::size_t size, Options options) : options_(options), m_(size), v_(size) {}

void Adam::step(std::span<float> params, std::span<const float> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("Adam: parameter group size changed");
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double sign = options_.ascend ? 1.0 : -1.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    const double update = options_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + options_.eps);
    params[i] = static_cast<float>(params[i] + sign * update);
  }
}

void Sgd::step(std::span<float> params, std::span<const float> grads) const {
  if (params.size() != grads.size()) throw DimensionError("Sgd: gradient size mismatch");
  const float sign = ascend_ ? 1.0f : -1.0f;
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += sign * lr_ * grads[i];
}

OptimizerKind parse_optimizer_kind(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd or adam)");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

GroupOptimizer::GroupOptimizer(OptimizerKind kind, std::size_t size, float lr, bool ascend,
                               float beta2)
    : kind_(kind), sgd_(lr, ascend), adam_(size, {.lr = lr, .beta2 = beta2, .ascend = ascend}) {}

void GroupOptimizer::step(std::span<float> params, std::span<const float> grads) {
  if (kind_ == OptimizerKind::sgd) {
    sgd_.step(params, grads);
  } else {
    adam_.step(params, grads);
  }
}

}  // namespace depthroute
