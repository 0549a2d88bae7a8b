// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "depthroute/errors.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {
namespace {

// Zipf-like pick: index i with weight 1/(i+1).
std::size_t zipf(Rng& rng, std::size_t n) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += 1.0 / static_cast<double>(i + 1);
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < n; ++i) {
    u -= 1.0 / static_cast<double>(i + 1);
    if (u <= 0.0) return i;
  }
  return n - 1;
}

std::string random_word(Rng& rng, std::string_view letters, std::size_t min_len,
                        std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w += letters[rng.below(letters.size())];
  return w;
}

std::vector<std::string> lexicon(std::uint64_t variant, std::string_view letters, std::size_t n,
                                 std::size_t min_len, std::size_t max_len) {
  Rng rng(mix_seed(0x1e41c0, variant));
  std::vector<std::string> words;
  while (words.size() < n) {
    std::string w = random_word(rng, letters, min_len, max_len);
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(std::move(w));
  }
  return words;
}

void prose(std::string& out, Rng& rng, std::size_t variant) {
  static const std::string kLetters = "aeioulnrstmdk";
  const auto words = lexicon(variant, kLetters, 48, 2, 7);
  const std::size_t n = 5 + rng.below(8);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    std::string w = words[zipf(rng, words.size())];
    if (i == 0) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    s += (i ? " " : "") + w;
  }
  out += s + (rng.below(4) == 0 ? ", " : ". ");
}

void arithmetic(std::string& out, Rng& rng, std::size_t variant) {
  const long long start = static_cast<long long>(rng.below(50 + 50 * variant));
  const long long step = 1 + static_cast<long long>(rng.below(9 + variant));
  const std::size_t n = 5 + rng.below(6);
  for (std::size_t i = 0; i < n; ++i) out += std::to_string(start + step * static_cast<long long>(i)) + " ";
  out += "; ";
}

void motifs(std::string& out, Rng& rng, std::size_t variant) {
  static const std::string kUpper = "BCFGHJKPQVWXYZ";
  const auto bank = lexicon(0x30000 + variant, kUpper, 24, 3, 5);
  const std::string& m = bank[zipf(rng, bank.size())];
  const std::size_t reps = 2 + rng.below(4);
  for (std::size_t i = 0; i < reps; ++i) out += m + (i + 1 < reps ? "-" : "");
  out += rng.below(3) == 0 ? "\n" : " ";
}

void code(std::string& out, Rng& rng, std::size_t variant) {
  static const std::string kIdent = "xyzqwvj";
  static const char* kOps[] = {"+", "*", "-", "<<", "%"};
  const auto names = lexicon(0x40000 + variant, kIdent, 12, 1, 3);
  auto name = [&] { return names[zipf(rng, names.size())]; };
  switch (rng.below(3)) {
    case 0:
      out += name() + "=" + name() + kOps[rng.below(5)] + std::to_string(rng.below(10)) + ";";
      break;
    case 1:
      out += "if(" + name() + "<" + std::to_string(rng.below(100)) + "){" + name() + "[" +
             std::to_string(rng.below(8)) + "]=0;}";
      break;
    default:
      out += "f(" + name() + ",{" + name() + ":" + name() + "});";
      break;
  }
  out += rng.below(2) == 0 ? "\n" : " ";
}

std::map<std::string, int> read_labels(const std::filesystem::path& file) {
  std::map<std::string, int> labels;
  std::ifstream in(file);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("id,", 0) == 0) continue;
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError("expected id,domain", lineno);
    try {
      labels[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError("domain is not an integer", lineno);
    }
  }
  return labels;
}

}  // namespace

void CorpusSpec::validate() const {
  if (num_domains < 1) throw ConfigError("num_domains must be >= 1");
  if (docs_per_domain < 1) throw ConfigError("docs_per_domain must be >= 1");
  if (doc_len < 1) throw ConfigError("doc_len must be >= 1");
}

std::string synthetic_document(std::size_t domain, std::size_t doc_len, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t variant = domain / 4;
  std::string out;
  while (out.size() < doc_len) {
    switch (domain % 4) {
      case 0: prose(out, rng, variant); break;
      case 1: arithmetic(out, rng, variant); break;
      case 2: motifs(out, rng, variant); break;
      default: code(out, rng, variant); break;
    }
  }
  out.resize(doc_len);
  // documents never contain blank lines so the single-file form round-trips
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i] == '\n' && out[i - 1] == '\n') out[i] = ' ';
  }
  return out;
}

std::vector<Document> make_synthetic_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<Document> docs;
  for (std::size_t d = 0; d < spec.num_domains; ++d) {
    for (std::size_t i = 0; i < spec.docs_per_domain; ++i) {
      char id[48];
      std::snprintf(id, sizeof(id), "d%02zu_%05zu", d, i);
      docs.push_back({id,
                      synthetic_document(d, spec.doc_len, mix_seed(spec.seed, (d << 32) | i)),
                      static_cast<int>(d)});
    }
  }
  return docs;
}

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw IoError("cannot write " + (dir / "labels.csv").string());
  labels << "id,domain\n";
  for (const auto& doc : docs) {
    std::ofstream f(dir / (doc.id + ".txt"), std::ios::binary);
    if (!f) throw IoError("cannot write document " + doc.id);
    f << doc.text;
    labels << doc.id << ',' << doc.domain << '\n';
  }
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw IoError("corpus path does not exist: " + path.string());
  std::vector<Document> docs;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, int> labels;
    if (fs::exists(path / "labels.csv")) labels = read_labels(path / "labels.csv");
    for (const auto& f : files) {
      std::ifstream in(f, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      Document d{f.stem().string(), ss.str(), -1};
      if (auto it = labels.find(d.id); it != labels.end()) d.domain = it->second;
      if (!d.text.empty()) docs.push_back(std::move(d));
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    std::string line, current;
    auto flush = [&] {
      if (!current.empty()) {
        docs.push_back({"doc" + std::to_string(docs.size()), current, -1});
        current.clear();
      }
    };
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) {
        flush();
      } else {
        if (!current.empty()) current += '\n';
        current += line;
      }
    }
    flush();
  }
  if (docs.empty()) throw IoError("no documents found in " + path.string());
  return docs;
}

}  // namespace depthroute
