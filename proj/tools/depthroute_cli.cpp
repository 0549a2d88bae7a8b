// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// depthroute: command-line driver for every pipeline stage.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "depthroute/baselines.hpp"
#include "depthroute/checkpoint.hpp"
#include "depthroute/corpus.hpp"
#include "depthroute/errors.hpp"
#include "depthroute/evaluation.hpp"
#include "depthroute/flops.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/pipeline.hpp"
#include "depthroute/router.hpp"
#include "depthroute/tokenizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace depthroute;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) cfg = load_experiment(g.config);
  if (g.seed) cfg.seeds = {*g.seed};
  if (!g.out.empty()) cfg.out = g.out;
  return cfg;
}

std::uint64_t first_seed(const ExperimentConfig& cfg) { return cfg.seeds.front(); }

std::vector<Document> corpus_from(const std::string& path, const ExperimentConfig& cfg) {
  if (!path.empty()) return load_corpus(path);
  if (!cfg.corpus_path.empty()) return load_corpus(cfg.corpus_path);
  return make_synthetic_corpus(cfg.synthetic);
}

Transformer checkpoint_from(const std::string& path, const ExperimentConfig& cfg) {
  std::string p = !path.empty() ? path : cfg.checkpoint_path.string();
  if (p.empty() && std::filesystem::exists(cfg.out / "base.ckpt")) p = (cfg.out / "base.ckpt").string();
  if (p.empty()) throw ConfigError("no checkpoint given (--checkpoint, base.checkpoint or <out>/base.ckpt)");
  Transformer t = load_checkpoint(p);
  ModelConfig mc = t.config();
  mc.granularity = cfg.granularity;
  return Transformer(mc, t.weights());
}

BinaryMask parse_mask(const std::string& text) {
  BinaryMask m;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "0" && item != "1") throw InputError("mask entries must be 0 or 1, got '" + item + "'");
    m.push_back(item == "1");
  }
  return m;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Input-aware dynamic depth pruning laboratory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--seed", g.seed, "seed override");
  app.add_option("--out", g.out, "output directory");
  app.fallthrough();

  std::string stage_name;
  std::function<void()> action;
  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->fallthrough();
    return s;
  };

  // gen-corpus
  CorpusSpec cs;
  auto* gen = sub("gen-corpus", "write a synthetic multi-domain corpus");
  gen->add_option("--domains", cs.num_domains, "number of domains")->capture_default_str();
  gen->add_option("--docs", cs.docs_per_domain, "documents per domain")->capture_default_str();
  gen->add_option("--len", cs.doc_len, "bytes per document")->capture_default_str();
  gen->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      cs.seed = g.seed.value_or(cfg.synthetic.seed);
      const auto docs = make_synthetic_corpus(cs);
      const fs::path dir = cfg.out / "corpus";
      write_corpus(docs, dir);
      std::cout << "wrote " << docs.size() << " documents to " << dir.string() << '\n';
    };
  });

  // train-base
  std::string corpus_path;
  std::size_t base_steps = 0;
  auto* tb = sub("train-base", "train the toy base model");
  tb->add_option("--corpus", corpus_path, "corpus directory or file");
  tb->add_option("--steps", base_steps, "override training steps");
  tb->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      if (base_steps) cfg.base_train.steps = base_steps;
      if (g.seed) cfg.base_train.seed = *g.seed;
      const auto docs = corpus_from(corpus_path, cfg);
      const auto tokens = tokenize_documents(docs);
      ModelConfig mc = cfg.model;
      mc.granularity = Granularity::block;
      Transformer t = Transformer::random(mc, mix_seed(cfg.base_train.seed, 0x1417));
      const auto res = train_base_model(t, tokens, cfg.base_train);
      fs::create_directories(cfg.out);
      save_checkpoint(t, cfg.out / "base.ckpt");
      std::ostringstream log;
      log << "step,loss\n";
      for (std::size_t i = 0; i < res.losses.size(); ++i) log << i << ',' << res.losses[i] << '\n';
      write_file(cfg.out / "base_train.csv", log.str());
      std::printf("final loss %.4f, checkpoint %s\n", res.losses.back(),
                  (cfg.out / "base.ckpt").string().c_str());
    };
  });

  // cluster
  std::size_t n_clusters = 0;
  auto* cl = sub("cluster", "encode the corpus and fit k-means");
  cl->add_option("--corpus", corpus_path, "corpus directory or file");
  cl->add_option("-n,--clusters", n_clusters, "cluster count (default: first configured)");
  cl->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto docs = corpus_from(corpus_path, cfg);
      const Encoder enc = build_encoder(cfg.encoder, docs);
      const auto emb = encode_documents(enc, docs);
      const std::size_t n = n_clusters ? n_clusters : cfg.clusters.front();
      const ClusterModel cm = kmeans_fit(emb, n, mix_seed(first_seed(cfg), 0xc1u));
      nlohmann::ordered_json j;
      j["encoder"] = encoder_to_json(enc.config());
      nlohmann::ordered_json ids = nlohmann::ordered_json::array();
      for (const auto& d : docs) ids.push_back(d.id);
      j["documents"] = ids;
      j["clusters"] = cluster_model_to_json(cm);
      write_file(cfg.out / "clusters.json", j.dump(2) + "\n");
      std::printf("N=%zu inertia %.6f iterations %zu\n", n, cm.inertia, cm.iterations);
    };
  });

  // train-masks
  std::string checkpoint, clusters_path;
  double sparsity = -1.0;
  auto* tm = sub("train-masks", "train one L0 mask per cluster and write a mask library");
  tm->add_option("--checkpoint", checkpoint, "base model checkpoint");
  tm->add_option("--corpus", corpus_path, "corpus directory or file");
  tm->add_option("--clusters", clusters_path, "output of the cluster stage");
  tm->add_option("--sparsity", sparsity, "target sparsity (default: first configured)");
  tm->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const Transformer model = checkpoint_from(checkpoint, cfg);
      const auto docs = corpus_from(corpus_path, cfg);
      const auto tokens = tokenize_documents(docs);
      const double sp = sparsity >= 0.0 ? sparsity : cfg.sparsities.front();
      LibraryTraining lt;
      if (!clusters_path.empty()) {
        std::ifstream is(clusters_path);
        if (!is) throw IoError("cannot open " + clusters_path);
        const auto j = nlohmann::json::parse(is);
        const auto ids = j.at("documents").get<std::vector<std::string>>();
        if (ids.size() != docs.size()) throw ConfigError("clusters file covers a different corpus");
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (ids[i] != docs[i].id) throw ConfigError("clusters file document order differs");
        }
        lt = train_mask_library(model, encoder_from_json(j.at("encoder")),
                                cluster_model_from_json(j.at("clusters")), tokens, sp,
                                cfg.mask_training, cfg.calibration_per_cluster, first_seed(cfg));
      } else {
        const Encoder enc = build_encoder(cfg.encoder, docs);
        lt = train_mask_library(model, enc, encode_documents(enc, docs), tokens,
                                cfg.clusters.front(), sp, cfg.mask_training,
                                cfg.calibration_per_cluster, first_seed(cfg));
      }
      fs::create_directories(cfg.out);
      save_library(lt.library, cfg.out / "library.json");
      for (std::size_t k = 0; k < lt.per_cluster.size(); ++k) {
        std::ostringstream os;
        write_training_log_csv(os, lt.per_cluster[k].log);
        write_file(cfg.out / "logs" / ("cluster" + std::to_string(k) + ".csv"), os.str());
        const auto& c = lt.per_cluster[k].candidate;
        std::printf("cluster %zu: zeros %.4f mask", k, c.achieved_sparsity);
        for (int v : c.binary_mask) std::printf(" %d", v);
        std::printf("\n");
      }
    };
  });

  // binarize
  std::string library_path;
  auto* bz = sub("binarize", "re-binarize a library's trained gates at a new sparsity");
  bz->add_option("--library", library_path, "mask library")->required();
  bz->add_option("--sparsity", sparsity, "target sparsity")->required();
  bz->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      MaskLibrary lib = load_library(library_path);
      for (auto& c : lib.candidates) {
        if (c.gate.log_alpha.empty()) throw ConfigError("library has no trained gates to binarize");
        c.binary_mask = binarize(c.gate, sparsity);
        c.achieved_sparsity = zero_fraction(c.binary_mask);
      }
      lib.target_sparsity = sparsity;
      fs::create_directories(cfg.out);
      save_library(lib, cfg.out / "library.json");
      std::cout << "wrote " << (cfg.out / "library.json").string() << '\n';
    };
  });

  // route
  std::string prompt;
  std::size_t steps = 32;
  auto* rt = sub("route", "route a prompt and generate with the selected mask");
  rt->add_option("--library", library_path, "mask library")->required();
  rt->add_option("--checkpoint", checkpoint, "base model checkpoint");
  rt->add_option("--prompt", prompt, "prompt text")->required();
  rt->add_option("--steps", steps, "tokens to generate")->capture_default_str();
  rt->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const Router router(load_library(library_path));
      Transformer model = checkpoint_from(checkpoint, cfg);
      ModelConfig mc = model.config();
      mc.granularity = router.library().granularity;
      model = Transformer(mc, model.weights());
      const auto gen = routed_generate(router, model, prompt, steps);
      nlohmann::ordered_json j;
      j["cluster"] = gen.report.cluster;
      j["distance"] = gen.report.distance;
      j["mask"] = gen.report.mask;
      j["skipped_flops_fraction"] = gen.report.skipped_flops_fraction;
      j["text"] = ByteTokenizer::decode(gen.tokens);
      std::cout << j.dump(2) << '\n';
    };
  });

  // eval
  std::string tasks_path;
  auto* ev = sub("eval", "held-out perplexity and multiple-choice accuracy");
  ev->add_option("--library", library_path, "mask library (default: dense)");
  ev->add_option("--checkpoint", checkpoint, "base model checkpoint");
  ev->add_option("--corpus", corpus_path, "evaluation corpus");
  ev->add_option("--tasks", tasks_path, "multiple-choice tasks (JSON lines)");
  ev->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      Transformer model = checkpoint_from(checkpoint, cfg);
      std::optional<Router> router;
      if (!library_path.empty()) {
        router.emplace(load_library(library_path));
        ModelConfig mc = model.config();
        mc.granularity = router->library().granularity;
        model = Transformer(mc, model.weights());
        router->check_compatible(model);
      }
      const BinaryMask dense(model.mask_size(), 1);
      const auto docs = corpus_from(corpus_path, cfg);
      PerplexityStats st;
      for (const auto& d : docs) {
        const BinaryMask mask = router ? router->route(d.text, d.id).mask : dense;
        st += masked_nll(model, mask, ByteTokenizer::encode(d.text, true));
      }
      std::printf("documents %zu tokens %zu nll %.6f ppl %.4f\n", docs.size(), st.tokens,
                  st.mean_nll(), st.perplexity());
      if (!tasks_path.empty()) {
        const auto tasks = load_tasks(tasks_path);
        std::size_t correct = 0;
        for (const auto& t : tasks) {
          const BinaryMask mask = router ? router->route(t.prompt).mask : dense;
          correct += predict_choice(model, mask, t) == t.answer;
        }
        std::printf("mc accuracy %.4f (%zu/%zu)\n",
                    tasks.empty() ? 0.0 : static_cast<double>(correct) / tasks.size(), correct,
                    tasks.size());
      }
    };
  });

  // baseline
  std::string method = "sleb";
  EvoPressOptions evo;
  auto* bl = sub("baseline", "static depth-pruning baseline");
  bl->add_option("--method", method, "sleb | oneshot | evopress")
      ->check(CLI::IsMember({"sleb", "oneshot", "evopress"}))
      ->capture_default_str();
  bl->add_option("--checkpoint", checkpoint, "base model checkpoint");
  bl->add_option("--corpus", corpus_path, "calibration corpus");
  bl->add_option("--sparsity", sparsity, "target sparsity (default: first configured)");
  bl->add_option("--generations", evo.generations, "evopress generations")->capture_default_str();
  bl->add_option("--population", evo.population, "evopress population")->capture_default_str();
  bl->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const Transformer model = checkpoint_from(checkpoint, cfg);
      const auto docs = corpus_from(corpus_path, cfg);
      const auto tokens = tokenize_documents(docs);
      const double sp = sparsity >= 0.0 ? sparsity : cfg.sparsities.front();
      const std::size_t k = zeros_for_sparsity(sp, model.mask_size());
      StaticMaskResult r;
      if (method == "sleb") {
        r = sleb_prune(model, tokens, k);
      } else if (method == "oneshot") {
        r = oneshot_importance_prune(model, tokens, k);
      } else {
        evo.seed = first_seed(cfg);
        r = evopress_search(model, tokens, sp, evo);
      }
      const EncoderConfig enc = build_encoder(cfg.encoder, docs).config();
      fs::create_directories(cfg.out);
      save_library(static_mask_library(r, model, enc, sp), cfg.out / (method + ".json"));
      std::printf("%s mask", r.method.c_str());
      for (int v : r.binary_mask) std::printf(" %d", v);
      std::printf("\n");
    };
  });

  // flops
  std::string arch = "llama3-8b", mask_text;
  std::size_t seq_len = 2048, attention_skips = 0;
  bool causal = false;
  auto* fl = sub("flops", "analytic forward FLOPs, dense and masked");
  fl->add_option("--arch", arch, "llama3-8b | config")->capture_default_str();
  fl->add_option("--checkpoint", checkpoint, "take the architecture from a checkpoint");
  fl->add_option("--seq-len", seq_len, "sequence length")->capture_default_str();
  fl->add_option("--mask", mask_text, "comma-separated binary block mask");
  fl->add_option("--library", library_path, "use cluster 0's mask from a library");
  fl->add_option("--attention-skips", attention_skips,
                 "skip this many attention blocks, last layers first");
  fl->add_flag("--causal", causal, "count only causal query-key pairs");
  fl->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      ArchDesc a;
      if (!checkpoint.empty()) a = ArchDesc::from(load_checkpoint(checkpoint).config());
      else if (arch == "llama3-8b") a = ArchDesc::llama3_8b();
      else if (arch == "config") a = ArchDesc::from(cfg.model);
      else throw ConfigError("unknown --arch " + arch);
      BinaryMask mask(2 * a.num_layers, 1);
      Granularity gran = Granularity::block;
      if (!mask_text.empty()) mask = parse_mask(mask_text);
      if (!library_path.empty()) {
        const MaskLibrary lib = load_library(library_path);
        mask = lib.candidates.front().binary_mask;
        gran = lib.granularity;
      }
      if (attention_skips > a.num_layers) throw ConfigError("more attention skips than layers");
      for (std::size_t i = 0; i < attention_skips; ++i) {
        mask[BlockId{a.num_layers - 1 - i, BlockKind::attention}.flat_index(gran)] = 0;
      }
      const FlopsReport r = masked_flops(a, seq_len, mask, gran,
                                         causal ? ScoreCounting::causal : ScoreCounting::full);
      write_flops_table(std::cout, r);
      std::ostringstream csv;
      write_flops_csv(csv, r);
      write_file(cfg.out / "flops.csv", csv.str());
    };
  });

  // pipeline
  auto* pl = sub("pipeline", "run the full experiment");
  pl->callback([&] {
    action = [&] {
      if (g.config.empty()) throw ConfigError("pipeline requires --config");
      const auto cfg = load_config(g);
      const EvalReport report = run_pipeline(cfg);
      write_summary(std::cout, report, cfg);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  for (CLI::App* s : app.get_subcommands()) stage_name = s->get_name();
  try {
    action();
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << stage_name << "] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
