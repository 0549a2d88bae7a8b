// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/mask_library.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "depthroute/errors.hpp"
#include "depthroute/json_util.hpp"

namespace depthroute {

void MaskLibrary::validate() const {
  if (version != kMaskLibraryVersion) {
    throw ConfigError("unsupported mask library version " + std::to_string(version));
  }
  if (candidates.empty()) throw ConfigError("mask library has no candidates");
  const std::size_t b = candidates.front().binary_mask.size();
  const auto expected_zeros = static_cast<std::size_t>(std::llround(target_sparsity * static_cast<double>(b)));
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (c.cluster_id != i) throw ConfigError("cluster ids must be 0..N-1 in order");
    if (c.binary_mask.size() != b) throw ConfigError("candidates disagree on mask length");
    if (!c.gate.log_alpha.empty() && c.gate.log_alpha.size() != b) {
      throw ConfigError("log_alpha length differs from mask length");
    }
    if (c.centroid.size() != encoder.dim) {
      throw ConfigError("centroid " + std::to_string(i) + " does not match encoder dim");
    }
    std::size_t zeros = 0;
    for (int v : c.binary_mask) {
      if (v != 0 && v != 1) throw ConfigError("binary_mask entries must be 0 or 1");
      zeros += v == 0;
    }
    if (zeros != expected_zeros) {
      throw ConfigError("candidate " + std::to_string(i) + " does not meet the target sparsity");
    }
  }
}

std::size_t MaskLibrary::mask_size() const {
  return candidates.empty() ? 0 : candidates.front().binary_mask.size();
}

std::string MaskLibrary::method() const { return metadata.value("method", std::string("")); }

std::string library_to_json(const MaskLibrary& lib) {
  lib.validate();
  nlohmann::ordered_json j;
  j["version"] = lib.version;
  j["model_fingerprint"] = lib.model_fingerprint;
  j["encoder"] = encoder_to_json(lib.encoder);
  j["granularity"] = to_string(lib.granularity);
  j["target_sparsity"] = sig9(lib.target_sparsity);
  nlohmann::ordered_json clusters = nlohmann::ordered_json::array();
  for (const auto& c : lib.candidates) {
    nlohmann::ordered_json cj;
    cj["id"] = c.cluster_id;
    cj["centroid"] = sig9_array(c.centroid);
    cj["log_alpha"] = sig9_array(c.gate.log_alpha);
    cj["binary_mask"] = c.binary_mask;
    clusters.push_back(std::move(cj));
  }
  j["clusters"] = std::move(clusters);
  nlohmann::ordered_json meta = lib.metadata;
  const GateParams& g = lib.candidates.front().gate;
  meta["gate"] = {{"beta", sig9(g.beta)}, {"l", sig9(g.l)}, {"r", sig9(g.r)},
                  {"epsilon", sig9(g.epsilon)}};
  j["metadata"] = std::move(meta);
  return j.dump(2) + "\n";
}

MaskLibrary library_from_json(std::string_view text) {
  MaskLibrary lib;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    lib.version = j.at("version").get<int>();
    lib.model_fingerprint = j.at("model_fingerprint").get<std::string>();
    lib.encoder = encoder_from_json(nlohmann::json(j.at("encoder")));
    lib.granularity = parse_granularity(j.at("granularity").get<std::string>());
    lib.target_sparsity = j.at("target_sparsity").get<double>();
    if (j.contains("metadata")) lib.metadata = j.at("metadata");
    GateParams constants;
    if (lib.metadata.contains("gate")) {
      const auto& g = lib.metadata.at("gate");
      constants.beta = g.value("beta", constants.beta);
      constants.l = g.value("l", constants.l);
      constants.r = g.value("r", constants.r);
      constants.epsilon = g.value("epsilon", constants.epsilon);
      lib.metadata.erase("gate");
    }
    for (const auto& cj : j.at("clusters")) {
      MaskCandidate c;
      c.cluster_id = cj.at("id").get<std::size_t>();
      c.centroid = cj.at("centroid").get<std::vector<float>>();
      c.gate = constants;
      c.gate.log_alpha = cj.at("log_alpha").get<std::vector<float>>();
      c.binary_mask = cj.at("binary_mask").get<BinaryMask>();
      c.achieved_sparsity = zero_fraction(c.binary_mask);
      lib.candidates.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("mask library: ") + e.what());
  }
  lib.validate();
  return lib;
}

void save_library(const MaskLibrary& library, const std::filesystem::path& path) {
  const std::string text = library_to_json(library);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

MaskLibrary load_library(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open mask library " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return library_from_json(ss.str());
}

}  // namespace depthroute
