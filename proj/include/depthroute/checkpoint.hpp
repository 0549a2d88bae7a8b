// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint container:
//
//   "DRCKPT\0\0"  magic
//   u32           format version (1)
//   u64 + bytes   model config as JSON
//   u32           tensor count; per tensor: u32 name length, name, u32 rank,
//                 u64 dims[rank], float32 data (little endian)
//   u32 + bytes   fingerprint (hex SHA-256), verified on load

#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"

#include "depthroute/model.hpp"

namespace depthroute {

inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::ordered_json config_to_json(const ModelConfig& config);
/// Unknown keys are rejected.
ModelConfig config_from_json(const nlohmann::json& json);

std::string sha256_hex(std::span<const unsigned char> bytes);
std::string weights_fingerprint(const ModelConfig& config, const ModelWeights& weights);

void save_checkpoint(const Transformer& model, const std::filesystem::path& path);
/// Throws IoError on unreadable or corrupt files.
Transformer load_checkpoint(const std::filesystem::path& path);

}  // namespace depthroute
