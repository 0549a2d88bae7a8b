// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>

#include "depthroute/errors.hpp"

namespace depthroute {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'R', 'C', 'K', 'P', 'T', '\0', '\0'};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("SHA-256 initialisation failed");
    }
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out.push_back(digits[md[i] >> 4]);
      out.push_back(digits[md[i] & 15]);
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

template <class T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("checkpoint truncated");
  }
  return value;
}

std::string read_string(std::istream& is, std::size_t n) {
  if (n > (std::size_t{1} << 30)) throw IoError("checkpoint string length implausible");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw IoError("checkpoint truncated");
  }
  return s;
}

}  // namespace

nlohmann::ordered_json config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["num_layers"] = c.num_layers;
  j["hidden_dim"] = c.hidden_dim;
  j["num_heads"] = c.num_heads;
  j["head_dim"] = c.head_dim;
  j["kv_heads"] = c.kv_heads;
  j["ffn_dim"] = c.ffn_dim;
  j["vocab_size"] = c.vocab_size;
  j["max_seq_len"] = c.max_seq_len;
  j["granularity"] = to_string(c.granularity);
  j["rope_theta"] = c.rope_theta;
  j["norm_eps"] = c.norm_eps;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "num_layers", "hidden_dim", "num_heads", "head_dim",   "kv_heads",  "ffn_dim",
      "vocab_size", "max_seq_len", "granularity", "rope_theta", "norm_eps"};
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  ModelConfig c;
  try {
    c.num_layers = j.value("num_layers", c.num_layers);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.num_heads = j.value("num_heads", c.num_heads);
    c.head_dim = j.value("head_dim", c.head_dim);
    c.kv_heads = j.value("kv_heads", c.kv_heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.granularity = parse_granularity(j.value("granularity", std::string("block")));
    c.rope_theta = j.value("rope_theta", c.rope_theta);
    c.norm_eps = j.value("norm_eps", c.norm_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string sha256_hex(std::span<const unsigned char> bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string weights_fingerprint(const ModelConfig& config, const ModelWeights& weights) {
  Sha256 h;
  // Granularity only changes how masks are read, not the weights.
  ModelConfig base = config;
  base.granularity = Granularity::block;
  h.update(config_to_json(base).dump());
  weights.for_each([&](const std::string& name, const Tensor& t) {
    h.update(name);
    h.update(shape_string(t.shape()));
    h.update(t.data().data(), t.size() * sizeof(float));
  });
  return h.hex();
}

std::string Transformer::fingerprint() const { return weights_fingerprint(config_, weights_); }

void save_checkpoint(const Transformer& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = config_to_json(model.config()).dump();
  write_pod<std::uint64_t>(os, cfg.size());
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  std::uint32_t count = 0;
  model.weights().for_each([&](const std::string&, const Tensor&) { ++count; });
  write_pod<std::uint32_t>(os, count);
  model.weights().for_each([&](const std::string& name, const Tensor& t) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t dim : t.shape()) write_pod<std::uint64_t>(os, dim);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
  });
  const std::string fp = model.fingerprint();
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(fp.size()));
  os.write(fp.data(), static_cast<std::streamsize>(fp.size()));
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Transformer load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::string cfg_text = read_string(is, read_pod<std::uint64_t>(is));
  ModelConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(cfg_text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint config: ") + e.what());
  }
  ModelWeights weights = ModelWeights::zeros(config);
  std::uint32_t expected = 0;
  weights.for_each([&](const std::string&, Tensor&) { ++expected; });
  if (read_pod<std::uint32_t>(is) != expected) throw IoError("checkpoint tensor count mismatch");
  weights.for_each([&](const std::string& name, Tensor& t) {
    const std::string stored = read_string(is, read_pod<std::uint32_t>(is));
    if (stored != name) throw IoError("checkpoint expected tensor " + name + ", found " + stored);
    const auto rank = read_pod<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& dim : shape) dim = read_pod<std::uint64_t>(is);
    if (shape != t.shape()) throw IoError("checkpoint tensor " + name + " has wrong shape");
    if (!is.read(reinterpret_cast<char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(float)))) {
      throw IoError("checkpoint truncated in " + name);
    }
  });
  const std::string fp = read_string(is, read_pod<std::uint32_t>(is));
  Transformer model(config, std::move(weights));
  if (model.fingerprint() != fp) throw IoError("checkpoint fingerprint does not match contents");
  return model;
}

}  // namespace depthroute
