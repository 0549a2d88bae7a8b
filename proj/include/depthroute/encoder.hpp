// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sentence encoders producing unit-norm embeddings.
//
// hashed-ngram-tfidf: character n-grams (n in [ngram_min, ngram_max]) of the
// text framed by start/end markers are hashed into `dim` signed buckets, the
// bucket counts are weighted by a per-bucket IDF fitted on a corpus, and the
// result is L2-normalised. Only the first `truncate_bytes` bytes are used.
//
// external-file: embeddings precomputed elsewhere, looked up by item id.
// File format: a header line "dim=<d> count=<M>", then one line per item:
// "<item-id> v1 ... vd".

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace depthroute {

enum class EncoderKind { hashed_ngram_tfidf, external_file };

struct EncoderConfig {
  EncoderKind kind = EncoderKind::hashed_ngram_tfidf;
  std::size_t dim = 64;
  std::size_t ngram_min = 2;
  std::size_t ngram_max = 4;
  std::uint64_t hash_seed = 0x5eedULL;
  std::size_t truncate_bytes = 4096;
  /// Per-bucket IDF weights; empty means uniform.
  std::vector<float> idf;
  /// external-file only.
  std::string path;

  void validate() const;
};

nlohmann::ordered_json encoder_to_json(const EncoderConfig& config);
EncoderConfig encoder_from_json(const nlohmann::json& json);

class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  /// Hashed encoder with IDF statistics fitted on `corpus`.
  static Encoder fit_tfidf(EncoderConfig config, std::span<const std::string> corpus);

  /// Unit-norm embedding of `text`. The external-file kind looks up `id`, or
  /// the text itself when id is empty. Throws InputError on empty text and
  /// LookupError on a missing external entry.
  std::vector<float> encode(std::string_view text, std::string_view id = {}) const;

  std::size_t dim() const { return config_.dim; }
  const EncoderConfig& config() const { return config_; }

 private:
  /// Signed bucket counts before IDF weighting.
  std::vector<double> bucket_counts(std::string_view text) const;

  EncoderConfig config_;
  std::unordered_map<std::string, std::vector<float>> table_;
};

/// Parses an external embedding file into id → vector.
std::unordered_map<std::string, std::vector<float>> read_embedding_file(
    const std::filesystem::path& path, std::size_t* dim_out = nullptr);

}  // namespace depthroute
