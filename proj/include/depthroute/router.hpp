// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sequence-level routing: encode the input once, pick the nearest centroid,
// run the model with that cluster's binary mask.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthroute/encoder.hpp"
#include "depthroute/gates.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/model.hpp"

namespace depthroute {

struct RouteDecision {
  std::size_t cluster = 0;
  double distance = 0.0;  // squared Euclidean
  BinaryMask mask;
};

class Router {
 public:
  /// Throws CompatibilityError when centroids do not match the encoder dim.
  explicit Router(MaskLibrary library);

  const MaskLibrary& library() const { return library_; }
  const Encoder& encoder() const { return encoder_; }

  /// Throws CompatibilityError on fingerprint, mask size or granularity mismatch.
  void check_compatible(const Transformer& model) const;

  RouteDecision route(std::string_view text, std::string_view id = {}) const;
  RouteDecision route_embedding(std::span<const float> embedding) const;

  std::size_t encoder_calls() const { return encoder_calls_; }
  std::size_t distance_scans() const { return distance_scans_; }
  void reset_counters() const { encoder_calls_ = distance_scans_ = 0; }

 private:
  MaskLibrary library_;
  Encoder encoder_;
  std::vector<std::vector<float>> centroids_;
  mutable std::size_t encoder_calls_ = 0;
  mutable std::size_t distance_scans_ = 0;
};

struct RouteReport {
  std::size_t cluster = 0;
  double distance = 0.0;
  BinaryMask mask;
  /// Fraction of analytic forward FLOPs removed by the mask at the prompt length.
  double skipped_flops_fraction = 0.0;
};

struct RoutedGeneration {
  std::vector<int> tokens;
  RouteReport report;
};

/// Routes `prompt` once, then decodes greedily with the selected mask.
RoutedGeneration routed_generate(const Router& router, const Transformer& model,
                                 std::string_view prompt, std::size_t steps);

}  // namespace depthroute
