// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <sstream>

#include "depthroute/corpus.hpp"
#include "depthroute/errors.hpp"
#include "depthroute/kmeans.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "pipeline_fixture.hpp"

using namespace depthroute;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("depthroute_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> directory_listing(const fs::path& root) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root).string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

TEST_CASE("synthetic corpus is deterministic") {
  CorpusSpec spec;
  spec.docs_per_domain = 5;
  spec.doc_len = 200;
  const auto a = make_synthetic_corpus(spec), b = make_synthetic_corpus(spec);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].text == b[i].text);
    CHECK(a[i].id == b[i].id);
    CHECK(a[i].text.size() == 200);
  }
  spec.seed = 1;
  CHECK(make_synthetic_corpus(spec)[0].text != a[0].text);

  const fs::path d1 = scratch("corpus1"), d2 = scratch("corpus2");
  write_corpus(a, d1);
  write_corpus(b, d2);
  for (const auto& f : directory_listing(d1)) CHECK(read_file(d1 / f) == read_file(d2 / f));
  const auto back = load_corpus(d1);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].text == a[i].text);
    CHECK(back[i].domain == a[i].domain);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);

  CorpusSpec one;
  one.num_domains = 1;
  for (const auto& d : make_synthetic_corpus(one)) CHECK(d.domain == 0);
}

TEST_CASE("blank-line separated corpus file") {
  const fs::path p = fs::temp_directory_path() / "depthroute_corpus.txt";
  {
    std::ofstream out(p);
    out << "first doc\nline two\n\n\nsecond doc\n\nthird\n";
  }
  const auto docs = load_corpus(p);
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].text == "first doc\nline two");
  CHECK(docs[2].text == "third");
  fs::remove(p);
  CHECK_THROWS_AS(load_corpus(fs::temp_directory_path() / "depthroute_missing"), IoError);
}

TEST_CASE("encoder and k-means recover the synthetic domains") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    CorpusSpec spec;
    spec.num_domains = 4;
    spec.docs_per_domain = 24;
    spec.doc_len = 384;
    spec.seed = seed;
    const auto docs = make_synthetic_corpus(spec);
    const Encoder enc = build_encoder(EncoderConfig{}, docs);
    const auto emb = encode_documents(enc, docs);
    const ClusterModel m = kmeans_fit(emb, 4, seed);
    std::vector<std::size_t> truth;
    for (const auto& d : docs) truth.push_back(d.domain);
    CHECK(adjusted_rand_index(m.assignments, truth) >= 0.9);
  }
}

TEST_CASE("multiple-choice task files") {
  std::istringstream good(
      R"({"prompt": "ab", "choices": ["c", "d"], "answer": 1})"
      "\n\n"
      R"({"prompt": "x", "choices": ["y", "z", "w"], "answer": 0})"
      "\n");
  const auto tasks = parse_tasks(good);
  REQUIRE(tasks.size() == 2);
  CHECK(tasks[0].answer == 1);
  CHECK(tasks[1].choices.size() == 3);
  std::ostringstream os;
  write_tasks(os, tasks);
  std::istringstream again(os.str());
  CHECK(parse_tasks(again).size() == 2);

  for (const std::string bad :
       {R"({"prompt": "a", "choices": ["b"], "answer": 3})", R"({"prompt": "a"})", R"(not json)",
        R"({"prompt": "a", "choices": [], "answer": 0})"}) {
    std::istringstream is(R"({"prompt": "ok", "choices": ["a", "b"], "answer": 0})"
                          "\n" + bad + "\n");
    try {
      parse_tasks(is);
      FAIL("accepted " << bad);
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("identical choices tie to the first") {
  const Transformer m = Transformer::random([] {
    ModelConfig c = tiny_config(1);
    c.vocab_size = ByteTokenizer::kVocabSize;
    c.max_seq_len = 64;
    return c;
  }(), 1);
  const McTask t{"prompt text", {"same", "same"}, 0};
  const BinaryMask ones(2, 1);
  CHECK(predict_choice(m, ones, t) == 0);
  CHECK(toy_multiple_choice_eval(m, ones, std::vector<McTask>{t}) == 1.0);
}

TEST_CASE("random weights score at chance on balanced tasks") {
  ModelConfig c = tiny_config(2);
  c.vocab_size = ByteTokenizer::kVocabSize;
  c.max_seq_len = 64;
  Rng rng(3);
  std::vector<McTask> tasks;
  for (int i = 0; i < 400; ++i) {
    McTask t;
    t.prompt = std::string(8, 'a' + static_cast<char>(rng.below(26)));
    for (int k = 0; k < 4; ++k) {
      std::string s(6, ' ');
      for (char& ch : s) ch = static_cast<char>('a' + rng.below(26));
      t.choices.push_back(s);
    }
    t.answer = i % 4;
    tasks.push_back(t);
  }
  double acc = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Transformer m = Transformer::random(c, 100 + seed);
    acc += toy_multiple_choice_eval(m, BinaryMask(4, 1), tasks) / 3.0;
  }
  // 1200 draws at p = 0.25: three binomial standard errors
  CHECK(std::abs(acc - 0.25) <= 3 * std::sqrt(0.25 * 0.75 / 1200));
}

TEST_CASE("perplexity basics") {
  ModelConfig c = tiny_config(2);
  const Transformer zero(c, ModelWeights::zeros(c));
  Rng rng(4);
  std::vector<std::vector<int>> data = {random_tokens(30, 20, rng)};
  CHECK(evaluate_masked_ppl(zero, BinaryMask(4, 1), data) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(evaluate_masked_ppl(zero, BinaryMask(4, 0), data) == doctest::Approx(20.0).epsilon(1e-5));
  std::vector<std::vector<int>> empty;
  CHECK_THROWS_AS(evaluate_masked_ppl(zero, BinaryMask(4, 1), empty), ConfigError);
}

TEST_CASE("experiment config is strict") {
  const auto base = nlohmann::json::parse(R"({"schema_version": 1, "clusters": [2], "out": "x"})");
  const ExperimentConfig c = experiment_from_json(base);
  CHECK(c.clusters == std::vector<std::size_t>{2});
  auto typo = base;
  typo["cluster"] = 3;
  CHECK_THROWS_AS(experiment_from_json(typo), ConfigError);
  auto nested = base;
  nested["mask_training"] = {{"max_step", 10}};
  CHECK_THROWS_AS(experiment_from_json(nested), ConfigError);
  auto version = base;
  version["schema_version"] = 2;
  CHECK_THROWS_AS(experiment_from_json(version), ConfigError);
  auto bad_sp = base;
  bad_sp["sparsities"] = {1.0};
  CHECK_THROWS_AS(experiment_from_json(bad_sp).validate(), ConfigError);
  auto zero_n = base;
  zero_n["clusters"] = {0};
  CHECK_THROWS_AS(experiment_from_json(zero_n).validate(), ConfigError);
  auto missing = base;
  missing["corpus"] = {{"path", "/nonexistent/depthroute"}};
  CHECK_THROWS_AS(experiment_from_json(missing).validate(), ConfigError);

  const ExperimentConfig t = tiny_experiment("somewhere");
  const auto round = experiment_from_json(nlohmann::json::parse(experiment_to_json(t).dump()));
  CHECK(experiment_to_json(round).dump() == experiment_to_json(t).dump());
}

TEST_CASE("held-out split covers every reference cluster") {
  Rng rng(5);
  std::vector<Embedding> emb;
  for (int i = 0; i < 60; ++i) {
    Embedding e(4);
    for (float& x : e) x = static_cast<float>(rng.normal());
    e[i % 3] += 20.0f;
    emb.push_back(e);
  }
  const DataSplit s = split_heldout(emb, 3, 0.1, 7);
  CHECK(s.train.size() + s.heldout.size() == 60);
  std::vector<int> held_per(3);
  for (auto i : s.heldout) ++held_per[s.reference_cluster[i]];
  CHECK(held_per == std::vector<int>{2, 2, 2});
  const DataSplit again = split_heldout(emb, 3, 0.1, 7);
  CHECK(again.heldout == s.heldout);
}

TEST_CASE("tiny pipeline: aggregation, closure, determinism") {
  const fs::path out1 = scratch("pipe1"), out2 = scratch("pipe2");
  const EvalReport r1 = run_pipeline(tiny_experiment(out1));
  const EvalReport r2 = run_pipeline(tiny_experiment(out2));

  std::vector<std::string> methods;
  for (const auto& row : r1.rows) {
    if (row.cluster < 0) methods.push_back(row.method + "/" + std::to_string(row.n_clusters));
  }
  CHECK(methods == std::vector<std::string>{"dense/1", "l0-routed/1", "l0-routed/2", "sleb/1",
                                            "oneshot-ppl/1", "evopress/1"});

  // per-cluster rows aggregate to the overall row by token weight
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    const EvalRow& o = r1.rows[i];
    if (o.cluster >= 0) continue;
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t j = i + 1; j < r1.rows.size() && r1.rows[j].cluster >= 0; ++j) {
      nll += r1.rows[j].nll * double(r1.rows[j].tokens);
      tokens += r1.rows[j].tokens;
      CHECK(std::isnan(r1.rows[j].mc_accuracy));
    }
    CHECK(tokens == o.tokens);
    CHECK(nll / double(tokens) == doctest::Approx(o.nll).epsilon(1e-12));
    CHECK(o.mc_accuracy >= 0.0);
    CHECK(o.mc_accuracy <= 1.0);

    const double again = reevaluate_row(out1, o);
    CHECK(std::abs(again / o.ppl - 1.0) <= 1e-6);
  }

  const auto files = directory_listing(out1);
  CHECK(files == directory_listing(out2));
  for (const auto& f : files) {
    if (f.starts_with("libraries/") || f == "report.csv" || f == "summary.txt") {
      CHECK_MESSAGE(read_file(out1 / f) == read_file(out2 / f), f);
    }
  }
  for (const auto& h : r1.heatmaps) {
    for (const auto& row : h.rows) {
      for (int v : row) CHECK((v == 0 || v == 1));
    }
  }
  CHECK(read_file(out1 / "summary.txt").find("N-sweep") != std::string::npos);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("sparsity 0 reports dense perplexity everywhere") {
  const fs::path out = scratch("pipe0");
  ExperimentConfig c = tiny_experiment(out);
  c.sparsities = {0.0};
  const EvalReport r = run_pipeline(c);
  double dense = 0.0;
  for (const auto& row : r.rows) {
    if (row.method == "dense" && row.cluster < 0) dense = row.ppl;
  }
  for (const auto& row : r.rows) {
    if (row.cluster < 0) CHECK(row.ppl == dense);
  }
  fs::remove_all(out);
}

TEST_CASE("stage failures name the stage") {
  const fs::path out = scratch("pipe_fail");
  ExperimentConfig c = tiny_experiment(out);
  c.checkpoint_path = out / "missing.ckpt";
  try {
    run_pipeline(c);
    FAIL("pipeline accepted a missing checkpoint");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("[") != std::string::npos);
  } catch (const ConfigError&) {
    // rejected while validating the config
  }
  fs::remove_all(out);
}
