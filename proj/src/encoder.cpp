// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/encoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "depthroute/errors.hpp"
#include "depthroute/json_util.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {
namespace {

constexpr char kStart = '\x02';
constexpr char kEnd = '\x03';

std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix_seed(h);
}

std::vector<float> normalized(std::vector<double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  std::vector<float> out(v.size(), 0.0f);
  if (norm == 0.0) {
    out[0] = 1.0f;
    return out;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] / norm);
  return out;
}

}  // namespace

void EncoderConfig::validate() const {
  if (dim == 0) throw ConfigError("encoder dim must be >= 1");
  if (kind == EncoderKind::hashed_ngram_tfidf) {
    if (ngram_min == 0 || ngram_min > ngram_max) throw ConfigError("bad n-gram range");
    if (truncate_bytes == 0) throw ConfigError("truncate_bytes must be >= 1");
    if (!idf.empty() && idf.size() != dim) throw ConfigError("idf table does not match dim");
  } else if (path.empty()) {
    throw ConfigError("external-file encoder needs a path");
  }
}

nlohmann::ordered_json encoder_to_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  if (c.kind == EncoderKind::external_file) {
    j["kind"] = "external-file";
    j["dim"] = c.dim;
    j["path"] = c.path;
    return j;
  }
  j["kind"] = "hashed-ngram-tfidf";
  j["dim"] = c.dim;
  j["ngram_min"] = c.ngram_min;
  j["ngram_max"] = c.ngram_max;
  j["hash_seed"] = c.hash_seed;
  j["truncate_bytes"] = c.truncate_bytes;
  j["idf"] = sig9_array(c.idf);
  return j;
}

EncoderConfig encoder_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"kind",      "dim",            "ngram_min", "ngram_max",
                                              "hash_seed", "truncate_bytes", "idf",       "path"};
  if (!j.is_object()) throw ConfigError("encoder config must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown encoder key '" + key + "'");
  }
  EncoderConfig c;
  try {
    const std::string kind = j.value("kind", std::string("hashed-ngram-tfidf"));
    if (kind == "hashed-ngram-tfidf") {
      c.kind = EncoderKind::hashed_ngram_tfidf;
    } else if (kind == "external-file") {
      c.kind = EncoderKind::external_file;
    } else {
      throw ConfigError("unknown encoder kind '" + kind + "'");
    }
    c.dim = j.value("dim", c.dim);
    c.ngram_min = j.value("ngram_min", c.ngram_min);
    c.ngram_max = j.value("ngram_max", c.ngram_max);
    c.hash_seed = j.value("hash_seed", c.hash_seed);
    c.truncate_bytes = j.value("truncate_bytes", c.truncate_bytes);
    c.idf = j.value("idf", std::vector<float>{});
    c.path = j.value("path", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("encoder config: ") + e.what());
  }
  c.validate();
  return c;
}

std::unordered_map<std::string, std::vector<float>> read_embedding_file(
    const std::filesystem::path& path, std::size_t* dim_out) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding file " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("missing header", line_no);
  std::size_t dim = 0, count = 0;
  if (std::sscanf(line.c_str(), "dim=%zu count=%zu", &dim, &count) != 2 || dim == 0) {
    throw ParseError("header must read 'dim=<d> count=<M>'", line_no);
  }
  std::unordered_map<std::string, std::vector<float>> table;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    std::string id;
    ss >> id;
    std::vector<float> v;
    v.reserve(dim);
    double x;
    while (ss >> x) v.push_back(static_cast<float>(x));
    if (!ss.eof()) throw ParseError("non-numeric value in record '" + id + "'", line_no);
    if (v.size() != dim) {
      throw ParseError("record '" + id + "' has " + std::to_string(v.size()) + " values, expected " +
                           std::to_string(dim),
                       line_no);
    }
    double norm = 0.0;
    for (float f : v) norm += static_cast<double>(f) * f;
    if (norm == 0.0) throw ParseError("record '" + id + "' is a zero vector", line_no);
    norm = std::sqrt(norm);
    for (float& f : v) f = static_cast<float>(f / norm);
    if (!table.emplace(id, std::move(v)).second) {
      throw ParseError("duplicate item id '" + id + "'", line_no);
    }
  }
  if (table.size() != count) {
    throw ParseError("header announces " + std::to_string(count) + " records, found " +
                         std::to_string(table.size()),
                     line_no);
  }
  if (dim_out) *dim_out = dim;
  return table;
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.kind == EncoderKind::external_file) {
    std::size_t dim = 0;
    table_ = read_embedding_file(config_.path, &dim);
    if (dim != config_.dim) {
      throw ConfigError("embedding file dim " + std::to_string(dim) + " differs from configured " +
                        std::to_string(config_.dim));
    }
  }
}

Encoder Encoder::fit_tfidf(EncoderConfig config, std::span<const std::string> corpus) {
  config.kind = EncoderKind::hashed_ngram_tfidf;
  config.idf.clear();
  Encoder probe(config);
  std::vector<std::size_t> df(config.dim, 0);
  for (const auto& doc : corpus) {
    if (doc.empty()) continue;
    const auto counts = probe.bucket_counts(doc);
    for (std::size_t b = 0; b < config.dim; ++b) {
      if (counts[b] != 0.0) ++df[b];
    }
  }
  config.idf.resize(config.dim);
  const double m = static_cast<double>(corpus.size());
  for (std::size_t b = 0; b < config.dim; ++b) {
    config.idf[b] = static_cast<float>(std::log((1.0 + m) / (1.0 + static_cast<double>(df[b]))) + 1.0);
  }
  return Encoder(std::move(config));
}

std::vector<double> Encoder::bucket_counts(std::string_view text) const {
  std::string framed;
  framed.reserve(std::min(text.size(), config_.truncate_bytes) + 2);
  framed.push_back(kStart);
  framed.append(text.substr(0, config_.truncate_bytes));
  framed.push_back(kEnd);
  std::vector<double> counts(config_.dim, 0.0);
  const std::string_view view(framed);
  for (std::size_t n = config_.ngram_min; n <= config_.ngram_max; ++n) {
    if (view.size() < n) break;
    for (std::size_t i = 0; i + n <= view.size(); ++i) {
      const std::uint64_t h = hash_bytes(view.substr(i, n), config_.hash_seed + n);
      const double sign = (h >> 63) ? -1.0 : 1.0;
      counts[h % config_.dim] += sign;
    }
  }
  return counts;
}

std::vector<float> Encoder::encode(std::string_view text, std::string_view id) const {
  if (text.empty()) throw InputError("cannot encode empty text");
  if (config_.kind == EncoderKind::external_file) {
    const std::string key(id.empty() ? text : id);
    const auto it = table_.find(key);
    if (it == table_.end()) throw LookupError("no external embedding for item '" + key + "'");
    return it->second;
  }
  std::vector<double> v = bucket_counts(text);
  if (!config_.idf.empty()) {
    for (std::size_t b = 0; b < v.size(); ++b) v[b] *= config_.idf[b];
  }
  return normalized(std::move(v));
}

}  // namespace depthroute
