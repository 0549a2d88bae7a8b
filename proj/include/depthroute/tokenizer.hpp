// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depthroute {

/// Byte-level vocabulary: ids 0..255 are raw bytes, 256 marks a document start.
struct ByteTokenizer {
  static constexpr int kBos = 256;
  static constexpr int kVocabSize = 257;

  static std::vector<int> encode(std::string_view text, bool add_bos = true);
  /// Drops ids outside the byte range.
  static std::string decode(std::span<const int> ids);
};

}  // namespace depthroute
