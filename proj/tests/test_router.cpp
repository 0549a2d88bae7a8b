// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>

#include "depthroute/errors.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/router.hpp"
#include "depthroute/tokenizer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace depthroute;
using namespace testing_helpers;

namespace {

ModelConfig byte_config() {
  ModelConfig c = tiny_config(2);
  c.vocab_size = ByteTokenizer::kVocabSize;
  c.max_seq_len = 64;
  return c;
}

MaskLibrary make_library(const Transformer& model, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  MaskLibrary lib;
  lib.model_fingerprint = model.fingerprint();
  lib.granularity = model.config().granularity;
  lib.target_sparsity = 0.25;
  for (std::size_t k = 0; k < n; ++k) {
    MaskCandidate c;
    c.cluster_id = k;
    c.centroid.resize(lib.encoder.dim);
    for (float& x : c.centroid) x = static_cast<float>(rng.normal() * 0.2);
    c.gate = GateParams::initial(model.mask_size());
    for (float& la : c.gate.log_alpha) la = static_cast<float>(rng.normal());
    c.binary_mask = binarize(c.gate, lib.target_sparsity);
    c.achieved_sparsity = zero_fraction(c.binary_mask);
    lib.candidates.push_back(c);
  }
  lib.metadata["method"] = "l0-routed";
  return lib;
}

std::size_t brute_nearest(const MaskLibrary& lib, std::span<const float> e) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t k = 0; k < lib.candidates.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double diff = double(e[i]) - lib.candidates[k].centroid[i];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::string random_text(Rng& rng) {
  std::string s(5 + rng.below(200), ' ');
  for (char& c : s) c = static_cast<char>(32 + rng.below(95));
  return s;
}

}  // namespace

TEST_CASE("routing agrees with an exhaustive distance scan") {
  const Transformer m = Transformer::random(byte_config(), 1);
  const MaskLibrary lib = make_library(m, 6, 2);
  const Router router(lib);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const std::string text = random_text(rng);
    const auto d = router.route(text);
    const auto e = router.encoder().encode(text);
    CHECK(d.cluster == brute_nearest(lib, e));
    CHECK(d.mask == lib.candidates[d.cluster].binary_mask);
  }
}

TEST_CASE("centroid inputs and ties") {
  const Transformer m = Transformer::random(byte_config(), 1);
  MaskLibrary lib = make_library(m, 4, 5);
  const Router router(lib);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto d = router.route_embedding(lib.candidates[k].centroid);
    CHECK(d.cluster == k);
    CHECK(d.distance == 0.0);
  }
  MaskLibrary tie = lib;
  tie.candidates[1].centroid = tie.candidates[0].centroid;
  tie.candidates[3].centroid = tie.candidates[0].centroid;
  CHECK(Router(tie).route_embedding(tie.candidates[0].centroid).cluster == 0);
  std::vector<float> e(64, 0.0f), a(64, 0.0f), b(64, 0.0f);
  a[0] = 1.0f;
  b[0] = -1.0f;
  e[1] = 0.5f;
  tie.candidates[2].centroid = a;
  tie.candidates[1].centroid = b;
  tie.candidates[0].centroid = std::vector<float>(64, 3.0f);
  tie.candidates[3].centroid = std::vector<float>(64, 3.0f);
  CHECK(Router(tie).route_embedding(e).cluster == 1);
  CHECK_THROWS_AS(router.route_embedding(std::vector<float>(3)), InputError);
}

TEST_CASE("uniform scaling leaves the argmin unchanged") {
  const Transformer m = Transformer::random(byte_config(), 1);
  const MaskLibrary lib = make_library(m, 5, 6);
  Rng rng(7);
  for (float scale : {0.01f, 3.0f, 250.0f}) {
    MaskLibrary scaled = lib;
    for (auto& c : scaled.candidates) {
      for (float& x : c.centroid) x *= scale;
    }
    const Router a(lib), b(scaled);
    for (int i = 0; i < 100; ++i) {
      std::vector<float> e(64);
      for (float& x : e) x = static_cast<float>(rng.normal() * 0.3);
      std::vector<float> es = e;
      for (float& x : es) x *= scale;
      CHECK(a.route_embedding(e).cluster == b.route_embedding(es).cluster);
    }
  }
}

TEST_CASE("single-candidate library always routes to cluster 0") {
  const Transformer m = Transformer::random(byte_config(), 1);
  const Router router(make_library(m, 1, 8));
  Rng rng(9);
  for (int i = 0; i < 50; ++i) CHECK(router.route(random_text(rng)).cluster == 0);
}

TEST_CASE("one encoder call and one scan per routed generation") {
  const Transformer m = Transformer::random(byte_config(), 1);
  const Router router(make_library(m, 3, 10));
  for (std::size_t steps : {1, 5, 30}) {
    router.reset_counters();
    routed_generate(router, m, "route me once", steps);
    CHECK(router.encoder_calls() == 1);
    CHECK(router.distance_scans() == 1);
  }
}

TEST_CASE("routed generation") {
  const Transformer m = Transformer::random(byte_config(), 11);
  MaskLibrary lib = make_library(m, 3, 12);
  const Router router(lib);
  const auto a = routed_generate(router, m, "hello there", 10);
  const auto b = routed_generate(router, m, "hello there", 10);
  CHECK(a.tokens == b.tokens);
  CHECK(a.report.cluster == b.report.cluster);
  CHECK(a.report.mask == lib.candidates[a.report.cluster].binary_mask);
  CHECK(a.report.skipped_flops_fraction > 0.0);
  CHECK(a.tokens.size() == ByteTokenizer::encode("hello there", true).size() + 10);

  for (auto& c : lib.candidates) c.binary_mask.assign(m.mask_size(), 1);
  lib.target_sparsity = 0.0;
  for (auto& c : lib.candidates) c.achieved_sparsity = 0.0;
  const Router dense_router(lib);
  const auto r = routed_generate(dense_router, m, "hello there", 10);
  const auto ids = ByteTokenizer::encode("hello there", true);
  CHECK(r.tokens == m.generate(ids, std::vector<int>(m.mask_size(), 1), 10));
  CHECK(r.report.skipped_flops_fraction == 0.0);
}

TEST_CASE("compatibility checks") {
  const Transformer m = Transformer::random(byte_config(), 1);
  const Transformer other = Transformer::random(byte_config(), 2);
  const MaskLibrary lib = make_library(m, 2, 13);
  const Router router(lib);
  CHECK_NOTHROW(router.check_compatible(m));
  CHECK_THROWS_AS(router.check_compatible(other), CompatibilityError);
  CHECK_THROWS_AS(routed_generate(router, other, "x", 1), CompatibilityError);

  ModelConfig lc = byte_config();
  lc.granularity = Granularity::layer;
  const Transformer layered(lc, m.weights());
  MaskLibrary wrong = lib;
  wrong.model_fingerprint = layered.fingerprint();
  CHECK_THROWS_AS(Router(wrong).check_compatible(layered), CompatibilityError);

  MaskLibrary bad_dim = lib;
  for (auto& c : bad_dim.candidates) c.centroid.resize(10);
  CHECK_THROWS_AS(Router{bad_dim}, CompatibilityError);
  MaskLibrary empty = lib;
  empty.candidates.clear();
  CHECK_THROWS_AS(Router{empty}, ConfigError);
}

TEST_CASE("mask library file format") {
  const Transformer m = Transformer::random(byte_config(), 1);
  MaskLibrary lib = make_library(m, 2, 14);
  lib.candidates[0].centroid[0] = 0.123456789123f;
  const std::string text = library_to_json(lib);
  const auto j = nlohmann::ordered_json::parse(text);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"version", "model_fingerprint", "encoder", "granularity",
                                         "target_sparsity", "clusters", "metadata"});
  std::vector<std::string> ckeys;
  for (auto it = j["clusters"][0].begin(); it != j["clusters"][0].end(); ++it) ckeys.push_back(it.key());
  CHECK(ckeys == std::vector<std::string>{"id", "centroid", "log_alpha", "binary_mask"});
  CHECK(text.find("0.123456791") != std::string::npos);

  const MaskLibrary back = library_from_json(text);
  CHECK(library_to_json(back) == text);
  CHECK(back.method() == "l0-routed");
  const auto path = std::filesystem::temp_directory_path() / "depthroute_lib.json";
  save_library(lib, path);
  CHECK(library_to_json(load_library(path)) == text);
  std::filesystem::remove(path);

  MaskLibrary mixed = lib;
  mixed.candidates[1].binary_mask.push_back(1);
  CHECK_THROWS_AS(mixed.validate(), ConfigError);
}
