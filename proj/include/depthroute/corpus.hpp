// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multi-domain text and corpus file I/O.
//
// Domain d draws from style d % 4 with a vocabulary varied by d / 4:
//   0  prose over a small lowercase lexicon
//   1  arithmetic progressions of decimal numbers
//   2  repeated uppercase motifs
//   3  bracketed code-like statements
// On disk a corpus is a directory of <id>.txt files plus labels.csv
// (id,domain), or one text file with documents separated by blank lines.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace depthroute {

struct Document {
  std::string id;
  std::string text;
  int domain = -1;  // -1 when unlabelled
};

struct CorpusSpec {
  std::size_t num_domains = 4;
  std::size_t docs_per_domain = 64;
  std::size_t doc_len = 512;  // bytes
  std::uint64_t seed = 0;

  void validate() const;
};

/// Documents ordered by domain, then index. Deterministic under spec.seed.
std::vector<Document> make_synthetic_corpus(const CorpusSpec& spec);

std::string synthetic_document(std::size_t domain, std::size_t doc_len, std::uint64_t seed);

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& dir);

/// Reads a corpus directory or a blank-line-separated file. Throws IoError
/// when the path is missing or holds no documents.
std::vector<Document> load_corpus(const std::filesystem::path& path);

}  // namespace depthroute
