// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// The routing table: one trained mask per semantic cluster plus everything
// needed to reproduce a routing decision.
//
// JSON layout (field order fixed, decimals at 9 significant digits):
//   {version, model_fingerprint, encoder: {...}, granularity, target_sparsity,
//    clusters: [{id, centroid: [...], log_alpha: [...], binary_mask: [0|1,...]}],
//    metadata: {method, gate: {beta, l, r, epsilon}, ...}}

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "depthroute/encoder.hpp"
#include "depthroute/gates.hpp"
#include "depthroute/model.hpp"
#include "json.hpp"

namespace depthroute {

inline constexpr int kMaskLibraryVersion = 1;

struct MaskLibrary {
  int version = kMaskLibraryVersion;
  std::string model_fingerprint;
  EncoderConfig encoder;
  Granularity granularity = Granularity::block;
  double target_sparsity = 0.0;
  std::vector<MaskCandidate> candidates;
  /// Free-form extras; "method" names the producer ("l0-routed", "sleb", ...).
  nlohmann::ordered_json metadata = nlohmann::ordered_json::object();

  /// Throws ConfigError when candidates disagree on B, sparsity or centroid size.
  void validate() const;
  std::size_t mask_size() const;
  std::string method() const;
};

std::string library_to_json(const MaskLibrary& library);
MaskLibrary library_from_json(std::string_view text);
void save_library(const MaskLibrary& library, const std::filesystem::path& path);
MaskLibrary load_library(const std::filesystem::path& path);

}  // namespace depthroute
