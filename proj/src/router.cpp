// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/router.hpp"

#include <algorithm>

#include "depthroute/errors.hpp"
#include "depthroute/flops.hpp"
#include "depthroute/kmeans.hpp"
#include "depthroute/tokenizer.hpp"

namespace depthroute {

Router::Router(MaskLibrary library)
    : library_(std::move(library)), encoder_(library_.encoder) {
  if (library_.candidates.empty()) throw ConfigError("mask library has no candidates");
  for (const auto& c : library_.candidates) {
    if (c.centroid.size() != encoder_.dim()) {
      throw CompatibilityError("centroid of cluster " + std::to_string(c.cluster_id) + " has dim " +
                               std::to_string(c.centroid.size()) + ", encoder dim is " +
                               std::to_string(encoder_.dim()));
    }
    centroids_.push_back(c.centroid);
  }
  library_.validate();
}

void Router::check_compatible(const Transformer& model) const {
  const std::string fp = model.fingerprint();
  if (fp != library_.model_fingerprint) {
    throw CompatibilityError("model fingerprint " + fp.substr(0, 12) +
                             " does not match mask library " +
                             library_.model_fingerprint.substr(0, 12));
  }
  if (model.config().granularity != library_.granularity) {
    throw CompatibilityError("granularity mismatch: model " +
                             to_string(model.config().granularity) + ", library " +
                             to_string(library_.granularity));
  }
  if (model.mask_size() != library_.mask_size()) {
    throw CompatibilityError("mask size mismatch: model " + std::to_string(model.mask_size()) +
                             ", library " + std::to_string(library_.mask_size()));
  }
}

RouteDecision Router::route(std::string_view text, std::string_view id) const {
  ++encoder_calls_;
  const std::vector<float> e = encoder_.encode(text, id);
  return route_embedding(e);
}

RouteDecision Router::route_embedding(std::span<const float> embedding) const {
  if (embedding.size() != encoder_.dim()) {
    throw InputError("embedding has dim " + std::to_string(embedding.size()) + ", expected " +
                     std::to_string(encoder_.dim()));
  }
  ++distance_scans_;
  RouteDecision d;
  d.cluster = nearest_centroid(centroids_, embedding, &d.distance);
  d.mask = library_.candidates[d.cluster].binary_mask;
  return d;
}

RoutedGeneration routed_generate(const Router& router, const Transformer& model,
                                 std::string_view prompt, std::size_t steps) {
  router.check_compatible(model);
  const RouteDecision d = router.route(prompt);
  const std::vector<int> ids = ByteTokenizer::encode(prompt, true);
  RoutedGeneration out;
  out.tokens = model.generate(ids, d.mask, steps);
  out.report.cluster = d.cluster;
  out.report.distance = d.distance;
  out.report.mask = d.mask;
  const std::size_t s = std::max<std::size_t>(1, std::min(ids.size(), model.config().max_seq_len));
  const FlopsReport f = masked_flops(ArchDesc::from(model.config()), s, d.mask,
                                     model.config().granularity);
  out.report.skipped_flops_fraction = 1.0 - f.percentage;
  return out;
}

}  // namespace depthroute
