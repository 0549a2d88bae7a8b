// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <cstdlib>
#include <span>

#include "json.hpp"

namespace depthroute {

/// The double nearest to `v` printed with 9 significant digits. nlohmann
/// emits the shortest round-trip form of that double, so files carry at most
/// 9 significant digits while float values still reload exactly.
inline double sig9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

inline nlohmann::ordered_json sig9_array(std::span<const float> values) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (float v : values) arr.push_back(sig9(v));
  return arr;
}

}  // namespace depthroute
