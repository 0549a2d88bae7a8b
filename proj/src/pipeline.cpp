// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "depthroute/checkpoint.hpp"
#include "depthroute/errors.hpp"
#include "depthroute/flops.hpp"
#include "depthroute/router.hpp"
#include "depthroute/rng.hpp"
#include "depthroute/tokenizer.hpp"

namespace depthroute {
namespace fs = std::filesystem;
namespace {

using Json = nlohmann::json;
using OJson = nlohmann::ordered_json;

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string fmt_fixed(double v, int digits) {
  if (std::isnan(v)) return "";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string library_name(const std::string& method, std::size_t n, double sparsity,
                         std::uint64_t seed) {
  return method + "-n" + std::to_string(n) + "-s" + fmt_g(sparsity) + "-seed" +
         std::to_string(seed);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

template <class F>
auto stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

struct Context {
  const ExperimentConfig& cfg;
  const Transformer& model;
  const std::vector<Document>& docs;
  const std::vector<std::vector<int>>& tokens;
  const DataSplit& split;
  const std::vector<McTask>& tasks;
  std::size_t num_reference;
};

// Scores one library on the held-out documents: per-document routing, masked
// NLL, FLOPs at each document's length, routed multiple choice.
std::vector<EvalRow> evaluate_library(const Context& ctx, const MaskLibrary* lib,
                                      const EvalRow& proto) {
  const Transformer& model = ctx.model;
  std::optional<Router> router;
  if (lib) {
    router.emplace(*lib);
    router->check_compatible(model);
  }
  const BinaryMask dense(model.mask_size(), 1);
  const ArchDesc arch = ArchDesc::from(model.config());

  std::vector<PerplexityStats> per(ctx.num_reference);
  PerplexityStats total;
  double flops_weighted = 0.0;
  for (std::size_t idx : ctx.split.heldout) {
    const Document& doc = ctx.docs[idx];
    BinaryMask mask = dense;
    if (router) mask = router->route(doc.text, doc.id).mask;
    const PerplexityStats st = masked_nll(model, mask, ctx.tokens[idx]);
    per[ctx.split.reference_cluster[idx]] += st;
    total += st;
    const std::size_t s = std::min(ctx.tokens[idx].size(), model.config().max_seq_len);
    flops_weighted += static_cast<double>(st.tokens) *
                      masked_flops(arch, std::max<std::size_t>(s, 1), mask,
                                   model.config().granularity)
                          .percentage;
  }

  double mc = std::numeric_limits<double>::quiet_NaN();
  if (!ctx.tasks.empty()) {
    std::size_t correct = 0;
    for (const McTask& t : ctx.tasks) {
      BinaryMask mask = dense;
      if (router) mask = router->route(t.prompt).mask;
      correct += predict_choice(model, mask, t) == t.answer;
    }
    mc = static_cast<double>(correct) / static_cast<double>(ctx.tasks.size());
  }

  std::vector<EvalRow> rows;
  EvalRow overall = proto;
  overall.cluster = -1;
  overall.tokens = total.tokens;
  overall.nll = total.mean_nll();
  overall.ppl = total.perplexity();
  overall.mc_accuracy = mc;
  overall.flops_percentage =
      total.tokens ? flops_weighted / static_cast<double>(total.tokens) : 1.0;
  rows.push_back(overall);
  for (std::size_t k = 0; k < per.size(); ++k) {
    EvalRow r = proto;
    r.cluster = static_cast<int>(k);
    r.tokens = per[k].tokens;
    r.nll = per[k].mean_nll();
    r.ppl = per[k].perplexity();
    r.mc_accuracy = std::numeric_limits<double>::quiet_NaN();
    r.flops_percentage = overall.flops_percentage;
    rows.push_back(r);
  }
  return rows;
}

Heatmap heatmap_of(const std::string& name, const MaskLibrary& lib) {
  Heatmap h{name, {}};
  for (const auto& c : lib.candidates) h.rows.push_back(c.binary_mask);
  return h;
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  model.validate();
  if (!corpus_path.empty() && !fs::exists(corpus_path)) {
    throw ConfigError("corpus path does not exist: " + corpus_path.string());
  }
  if (corpus_path.empty()) synthetic.validate();
  if (!checkpoint_path.empty() && !fs::exists(checkpoint_path)) {
    throw ConfigError("checkpoint does not exist: " + checkpoint_path.string());
  }
  if (checkpoint_path.empty()) base_train.validate();
  if (!tasks_path.empty() && !fs::exists(tasks_path)) {
    throw ConfigError("tasks file does not exist: " + tasks_path.string());
  }
  encoder.validate();
  if (clusters.empty()) throw ConfigError("clusters list is empty");
  for (std::size_t n : clusters) {
    if (n < 1) throw ConfigError("cluster count must be >= 1");
  }
  if (sparsities.empty()) throw ConfigError("sparsities list is empty");
  for (double s : sparsities) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity " + fmt_g(s) + " outside [0, 1)");
  }
  if (seeds.empty()) throw ConfigError("seeds list is empty");
  mask_training.validate();
  if (calibration_per_cluster < 1) throw ConfigError("calibration_per_cluster must be >= 1");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout_fraction must lie in (0, 1)");
  }
  if (evopress.population < 1) throw ConfigError("evopress population must be >= 1");
  if (baseline_calib_docs < 1) throw ConfigError("baseline calib_docs must be >= 1");
}

ExperimentConfig experiment_from_json(const Json& j) {
  check_keys(j,
             {"schema_version", "model", "corpus", "base", "encoder", "clusters", "sparsities",
              "granularity", "seeds", "mask_training", "calibration_per_cluster",
              "holdout_fraction", "split_seed", "baselines", "eval", "out"},
             "experiment config");
  if (!j.contains("schema_version")) throw ConfigError("experiment config lacks schema_version");
  if (j.at("schema_version") != kExperimentSchemaVersion) {
    throw ConfigError("unsupported schema_version " + j.at("schema_version").dump());
  }
  ExperimentConfig c;
  try {
    if (j.contains("model")) c.model = config_from_json(j.at("model"));
    if (j.contains("corpus")) {
      const auto& cj = j.at("corpus");
      check_keys(cj, {"path", "num_domains", "docs_per_domain", "doc_len", "seed"}, "corpus");
      c.corpus_path = cj.value("path", std::string());
      c.synthetic.num_domains = cj.value("num_domains", c.synthetic.num_domains);
      c.synthetic.docs_per_domain = cj.value("docs_per_domain", c.synthetic.docs_per_domain);
      c.synthetic.doc_len = cj.value("doc_len", c.synthetic.doc_len);
      c.synthetic.seed = cj.value("seed", c.synthetic.seed);
    }
    if (j.contains("base")) {
      const auto& bj = j.at("base");
      check_keys(bj,
                 {"checkpoint", "steps", "batch_size", "seq_len", "lr", "warmup", "min_lr_ratio",
                  "clip_norm", "seed"},
                 "base");
      auto& b = c.base_train;
      c.checkpoint_path = bj.value("checkpoint", std::string());
      b.steps = bj.value("steps", b.steps);
      b.batch_size = bj.value("batch_size", b.batch_size);
      b.seq_len = bj.value("seq_len", b.seq_len);
      b.lr = bj.value("lr", b.lr);
      b.warmup = bj.value("warmup", b.warmup);
      b.min_lr_ratio = bj.value("min_lr_ratio", b.min_lr_ratio);
      b.clip_norm = bj.value("clip_norm", b.clip_norm);
      b.seed = bj.value("seed", b.seed);
    }
    if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"));
    if (j.contains("clusters")) c.clusters = j.at("clusters").get<std::vector<std::size_t>>();
    if (j.contains("sparsities")) c.sparsities = j.at("sparsities").get<std::vector<double>>();
    if (j.contains("granularity")) {
      c.granularity = parse_granularity(j.at("granularity").get<std::string>());
    } else {
      c.granularity = c.model.granularity;
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("mask_training")) {
      const auto& mj = j.at("mask_training");
      check_keys(mj,
                 {"batch_size", "gate_lr", "lagrangian_lr", "max_steps", "train_seq_len",
                  "log_alpha_init", "include_lm_loss", "gate_optimizer",
                  "lagrangian_optimizer", "adam_beta2", "target_warmup_steps"},
                 "mask_training");
      auto& m = c.mask_training;
      m.batch_size = mj.value("batch_size", m.batch_size);
      m.gate_lr = mj.value("gate_lr", m.gate_lr);
      m.lagrangian_lr = mj.value("lagrangian_lr", m.lagrangian_lr);
      m.max_steps = mj.value("max_steps", m.max_steps);
      m.train_seq_len = mj.value("train_seq_len", m.train_seq_len);
      m.log_alpha_init = mj.value("log_alpha_init", m.log_alpha_init);
      m.include_lm_loss = mj.value("include_lm_loss", m.include_lm_loss);
      m.adam_beta2 = mj.value("adam_beta2", m.adam_beta2);
      m.target_warmup_steps = mj.value("target_warmup_steps", m.target_warmup_steps);
      if (mj.contains("gate_optimizer")) {
        m.gate_optimizer = parse_optimizer_kind(mj.at("gate_optimizer").get<std::string>());
      }
      if (mj.contains("lagrangian_optimizer")) {
        m.lagrangian_optimizer =
            parse_optimizer_kind(mj.at("lagrangian_optimizer").get<std::string>());
      }
    }
    c.calibration_per_cluster = j.value("calibration_per_cluster", c.calibration_per_cluster);
    c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
    c.split_seed = j.value("split_seed", c.split_seed);
    if (j.contains("baselines")) {
      const auto& bj = j.at("baselines");
      check_keys(bj,
                 {"sleb", "oneshot", "evopress", "calib_docs", "evopress_generations",
                  "evopress_population", "evopress_offspring"},
                 "baselines");
      c.baseline_sleb = bj.value("sleb", c.baseline_sleb);
      c.baseline_oneshot = bj.value("oneshot", c.baseline_oneshot);
      c.baseline_evopress = bj.value("evopress", c.baseline_evopress);
      c.baseline_calib_docs = bj.value("calib_docs", c.baseline_calib_docs);
      c.evopress.generations = bj.value("evopress_generations", c.evopress.generations);
      c.evopress.population = bj.value("evopress_population", c.evopress.population);
      c.evopress.offspring_per_survivor =
          bj.value("evopress_offspring", c.evopress.offspring_per_survivor);
    }
    if (j.contains("eval")) {
      const auto& ej = j.at("eval");
      check_keys(ej, {"tasks", "mc_tasks", "mc_prompt_bytes", "mc_choice_bytes"}, "eval");
      c.tasks_path = ej.value("tasks", std::string());
      c.mc_tasks = ej.value("mc_tasks", c.mc_tasks);
      c.mc_prompt_bytes = ej.value("mc_prompt_bytes", c.mc_prompt_bytes);
      c.mc_choice_bytes = ej.value("mc_choice_bytes", c.mc_choice_bytes);
    }
    c.out = j.value("out", c.out.string());
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.model.granularity = c.granularity;
  c.validate();
  return c;
}

OJson experiment_to_json(const ExperimentConfig& c) {
  OJson j;
  j["schema_version"] = kExperimentSchemaVersion;
  j["model"] = config_to_json(c.model);
  OJson corpus;
  corpus["path"] = c.corpus_path.string();
  corpus["num_domains"] = c.synthetic.num_domains;
  corpus["docs_per_domain"] = c.synthetic.docs_per_domain;
  corpus["doc_len"] = c.synthetic.doc_len;
  corpus["seed"] = c.synthetic.seed;
  j["corpus"] = corpus;
  OJson base;
  base["checkpoint"] = c.checkpoint_path.string();
  base["steps"] = c.base_train.steps;
  base["batch_size"] = c.base_train.batch_size;
  base["seq_len"] = c.base_train.seq_len;
  base["lr"] = c.base_train.lr;
  base["warmup"] = c.base_train.warmup;
  base["min_lr_ratio"] = c.base_train.min_lr_ratio;
  base["clip_norm"] = c.base_train.clip_norm;
  base["seed"] = c.base_train.seed;
  j["base"] = base;
  j["encoder"] = encoder_to_json(c.encoder);
  j["clusters"] = c.clusters;
  j["sparsities"] = c.sparsities;
  j["granularity"] = to_string(c.granularity);
  j["seeds"] = c.seeds;
  OJson m;
  m["batch_size"] = c.mask_training.batch_size;
  m["gate_lr"] = c.mask_training.gate_lr;
  m["lagrangian_lr"] = c.mask_training.lagrangian_lr;
  m["max_steps"] = c.mask_training.max_steps;
  m["train_seq_len"] = c.mask_training.train_seq_len;
  m["log_alpha_init"] = c.mask_training.log_alpha_init;
  m["include_lm_loss"] = c.mask_training.include_lm_loss;
  m["gate_optimizer"] = to_string(c.mask_training.gate_optimizer);
  m["lagrangian_optimizer"] = to_string(c.mask_training.lagrangian_optimizer);
  m["adam_beta2"] = c.mask_training.adam_beta2;
  m["target_warmup_steps"] = c.mask_training.target_warmup_steps;
  j["mask_training"] = m;
  j["calibration_per_cluster"] = c.calibration_per_cluster;
  j["holdout_fraction"] = c.holdout_fraction;
  j["split_seed"] = c.split_seed;
  OJson b;
  b["sleb"] = c.baseline_sleb;
  b["oneshot"] = c.baseline_oneshot;
  b["evopress"] = c.baseline_evopress;
  b["calib_docs"] = c.baseline_calib_docs;
  b["evopress_generations"] = c.evopress.generations;
  b["evopress_population"] = c.evopress.population;
  b["evopress_offspring"] = c.evopress.offspring_per_survivor;
  j["baselines"] = b;
  OJson e;
  e["tasks"] = c.tasks_path.string();
  e["mc_tasks"] = c.mc_tasks;
  e["mc_prompt_bytes"] = c.mc_prompt_bytes;
  e["mc_choice_bytes"] = c.mc_choice_bytes;
  j["eval"] = e;
  j["out"] = c.out.string();
  return j;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(is);
  } catch (const Json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

// ---------------------------------------------------------------- stages

std::vector<std::vector<int>> tokenize_documents(std::span<const Document> docs) {
  std::vector<std::vector<int>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(ByteTokenizer::encode(d.text, true));
  return out;
}

Encoder build_encoder(const EncoderConfig& config, std::span<const Document> docs) {
  if (config.kind == EncoderKind::external_file) return Encoder(config);
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& d : docs) texts.push_back(d.text);
  return Encoder::fit_tfidf(config, texts);
}

std::vector<Embedding> encode_documents(const Encoder& encoder, std::span<const Document> docs) {
  std::vector<Embedding> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(encoder.encode(d.text, d.id));
  return out;
}

DataSplit split_heldout(std::span<const Embedding> embeddings, std::size_t reference_n,
                        double holdout_fraction, std::uint64_t seed) {
  const ClusterModel ref = kmeans_fit(embeddings, reference_n, mix_seed(seed, 0x5b17));
  DataSplit split;
  split.reference_cluster = ref.assignments;
  Rng rng(mix_seed(seed, 0x401d));
  for (std::size_t k = 0; k < reference_n; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ref.assignments.size(); ++i) {
      if (ref.assignments[i] == k) members.push_back(i);
    }
    for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
    std::size_t hold = static_cast<std::size_t>(
        std::llround(holdout_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) hold = std::clamp<std::size_t>(hold, 1, members.size() - 1);
    else hold = 0;
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i + hold >= members.size() ? split.heldout : split.train).push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.heldout.begin(), split.heldout.end());
  return split;
}

LibraryTraining train_mask_library(const Transformer& model, const Encoder& encoder,
                                   std::span<const Embedding> embeddings,
                                   std::span<const std::vector<int>> tokens, std::size_t n,
                                   double sparsity, const TrainingConfig& mask_cfg,
                                   std::size_t calibration_per_cluster, std::uint64_t seed) {
  if (embeddings.size() != tokens.size()) throw ConfigError("embeddings and tokens disagree");
  return train_mask_library(model, encoder.config(), kmeans_fit(embeddings, n, mix_seed(seed, 0xc1u)),
                            tokens, sparsity, mask_cfg, calibration_per_cluster, seed);
}

LibraryTraining train_mask_library(const Transformer& model, const EncoderConfig& encoder,
                                   ClusterModel clusters, std::span<const std::vector<int>> tokens,
                                   double sparsity, const TrainingConfig& mask_cfg,
                                   std::size_t calibration_per_cluster, std::uint64_t seed) {
  if (clusters.assignments.size() != tokens.size()) {
    throw ConfigError("cluster assignments and documents disagree");
  }
  LibraryTraining out;
  out.clusters = std::move(clusters);
  const std::size_t n = out.clusters.num_clusters();

  std::vector<std::vector<std::vector<int>>> data(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < out.clusters.assignments.size(); ++i) {
      if (out.clusters.assignments[i] == k) members.push_back(i);
    }
    if (members.empty()) throw TrainingError("cluster " + std::to_string(k) + " is empty");
    if (members.size() > calibration_per_cluster) {
      Rng rng(mix_seed(seed, 0xca1 + k));
      for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.below(i)]);
      members.resize(calibration_per_cluster);
      std::sort(members.begin(), members.end());
    }
    for (std::size_t i : members) data[k].push_back(tokens[i]);
  }

  TrainingConfig tc = mask_cfg;
  tc.train_seq_len = std::min(tc.train_seq_len, model.config().max_seq_len);
  tc.seed = mix_seed(seed, n);
  out.per_cluster.resize(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      SparsityController ctrl;
      ctrl.s_target = sparsity;
      out.per_cluster[k] = train_cluster_mask(model, data[k], tc, ctrl, k, out.clusters.centroids[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  MaskLibrary& lib = out.library;
  lib.model_fingerprint = model.fingerprint();
  lib.encoder = encoder;
  lib.granularity = model.config().granularity;
  lib.target_sparsity = sparsity;
  for (auto& r : out.per_cluster) lib.candidates.push_back(r.candidate);
  lib.metadata["method"] = "l0-routed";
  lib.metadata["n_clusters"] = n;
  lib.metadata["seed"] = seed;
  lib.validate();
  return out;
}

std::vector<McTask> make_heldout_tasks(std::span<const Document> docs,
                                       std::span<const std::size_t> heldout,
                                       std::span<const std::size_t> reference_cluster,
                                       std::size_t max_tasks, std::size_t prompt_bytes,
                                       std::size_t choice_bytes, std::uint64_t seed) {
  std::vector<std::size_t> usable;
  for (std::size_t i : heldout) {
    if (docs[i].text.size() >= prompt_bytes + choice_bytes) usable.push_back(i);
  }
  std::vector<McTask> tasks;
  if (usable.size() < 2) return tasks;
  Rng rng(mix_seed(seed, 0x3c7a));
  for (std::size_t t = 0; t < std::min(max_tasks, usable.size()); ++t) {
    const std::size_t src = usable[t];
    McTask task;
    task.prompt = docs[src].text.substr(0, prompt_bytes);
    const std::string truth = docs[src].text.substr(prompt_bytes, choice_bytes);
    // distractors: same offset in other documents of the same cluster first
    std::vector<std::size_t> pool, fallback;
    for (std::size_t j : usable) {
      if (j == src) continue;
      (reference_cluster[j] == reference_cluster[src] ? pool : fallback).push_back(j);
    }
    pool.insert(pool.end(), fallback.begin(), fallback.end());
    std::vector<std::string> choices = {truth};
    for (std::size_t j : pool) {
      if (choices.size() == 4) break;
      std::string c = docs[j].text.substr(prompt_bytes, choice_bytes);
      if (std::find(choices.begin(), choices.end(), c) == choices.end()) choices.push_back(c);
    }
    if (choices.size() < 2) continue;
    task.answer = rng.below(choices.size());
    std::swap(choices[0], choices[task.answer]);
    task.choices = std::move(choices);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------- report

void write_report_csv(std::ostream& os, const EvalReport& report) {
  os << "method,n_clusters,sparsity,seed,cluster,tokens,nll,ppl,mc_accuracy,flops_percentage,"
        "library\n";
  for (const auto& r : report.rows) {
    os << r.method << ',' << r.n_clusters << ',' << fmt_g(r.sparsity) << ',' << r.seed << ','
       << (r.cluster < 0 ? std::string("all") : std::to_string(r.cluster)) << ',' << r.tokens
       << ',' << fmt_fixed(r.nll, 9) << ',' << fmt_fixed(r.ppl, 6) << ','
       << fmt_fixed(r.mc_accuracy, 6) << ',' << fmt_fixed(r.flops_percentage, 6) << ','
       << r.library << '\n';
  }
}

void write_heatmap_csv(std::ostream& os, const Heatmap& h) {
  os << "cluster";
  const std::size_t b = h.rows.empty() ? 0 : h.rows.front().size();
  for (std::size_t i = 0; i < b; ++i) os << ",b" << i;
  os << '\n';
  for (std::size_t k = 0; k < h.rows.size(); ++k) {
    os << k;
    for (int v : h.rows[k]) os << ',' << v;
    os << '\n';
  }
}

void write_summary(std::ostream& os, const EvalReport& report, const ExperimentConfig& cfg) {
  struct Acc {
    double nll = 0.0, ppl = 0.0, mc = 0.0, flops = 0.0;
    std::size_t count = 0, mc_count = 0;
  };
  std::map<std::tuple<double, std::string, std::size_t>, Acc> acc;
  for (const auto& r : report.rows) {
    if (r.cluster >= 0) continue;
    Acc& a = acc[{r.sparsity, r.method, r.n_clusters}];
    a.nll += r.nll;
    a.ppl += r.ppl;
    a.flops += r.flops_percentage;
    ++a.count;
    if (!std::isnan(r.mc_accuracy)) {
      a.mc += r.mc_accuracy;
      ++a.mc_count;
    }
  }
  os << "held-out evaluation, mean over " << cfg.seeds.size() << " seed(s)\n\n";
  char line[200];
  std::snprintf(line, sizeof(line), "%-10s %-12s %4s %12s %12s %8s %8s\n", "sparsity", "method",
                "N", "ppl", "nll", "mc_acc", "flops%");
  os << line;
  for (const auto& [key, a] : acc) {
    const auto& [sp, method, n] = key;
    const double c = static_cast<double>(a.count);
    std::snprintf(line, sizeof(line), "%-10s %-12s %4zu %12.4f %12.6f %8s %8.2f\n",
                  fmt_g(sp).c_str(), method.c_str(), n, a.ppl / c, a.nll / c,
                  a.mc_count ? fmt_fixed(a.mc / static_cast<double>(a.mc_count), 4).c_str() : "-",
                  100.0 * a.flops / c);
    os << line;
  }
  if (cfg.clusters.size() > 1) {
    os << "\nN-sweep (l0-routed, mean held-out ppl)\n";
    for (double sp : cfg.sparsities) {
      os << "sparsity " << fmt_g(sp) << ':';
      for (std::size_t n : cfg.clusters) {
        auto it = acc.find({sp, std::string("l0-routed"), n});
        if (it == acc.end()) continue;
        std::snprintf(line, sizeof(line), "  N=%zu %.4f", n,
                      it->second.ppl / static_cast<double>(it->second.count));
        os << line;
      }
      os << '\n';
    }
  }
  if (!report.notes.empty()) {
    os << "\nnotes\n";
    for (const auto& n : report.notes) os << "- " << n << '\n';
  }
}

// ---------------------------------------------------------------- driver

EvalReport run_pipeline(const ExperimentConfig& cfg) {
  stage("config", [&] { cfg.validate(); });
  fs::create_directories(cfg.out);
  for (const char* sub : {"libraries", "heatmaps", "logs", "clusters"}) {
    fs::create_directories(cfg.out / sub);
  }
  write_text(cfg.out / "config.json", experiment_to_json(cfg).dump(2) + "\n");

  const std::vector<Document> docs = stage("corpus", [&] {
    if (!cfg.corpus_path.empty()) return load_corpus(cfg.corpus_path);
    auto d = make_synthetic_corpus(cfg.synthetic);
    write_corpus(d, cfg.out / "corpus");
    return d;
  });
  const std::vector<std::vector<int>> tokens = tokenize_documents(docs);

  const std::size_t reference_n = *std::max_element(cfg.clusters.begin(), cfg.clusters.end());
  const Encoder encoder = stage("encode", [&] { return build_encoder(cfg.encoder, docs); });
  const std::vector<Embedding> embeddings =
      stage("encode", [&] { return encode_documents(encoder, docs); });
  const DataSplit split = stage("split", [&] {
    if (reference_n > docs.size()) throw ConfigError("more clusters than documents");
    return split_heldout(embeddings, reference_n, cfg.holdout_fraction, cfg.split_seed);
  });
  {
    std::ofstream os(cfg.out / "split.csv");
    os << "id,reference_cluster,role\n";
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const bool held = std::binary_search(split.heldout.begin(), split.heldout.end(), i);
      os << docs[i].id << ',' << split.reference_cluster[i] << ',' << (held ? "heldout" : "train")
         << '\n';
    }
  }

  std::vector<Document> train_docs;
  std::vector<std::vector<int>> train_tokens;
  std::vector<Embedding> train_embeddings;
  for (std::size_t i : split.train) {
    train_docs.push_back(docs[i]);
    train_tokens.push_back(tokens[i]);
    train_embeddings.push_back(embeddings[i]);
  }

  const Transformer model = stage("base", [&] {
    Transformer base = [&] {
      if (!cfg.checkpoint_path.empty()) return load_checkpoint(cfg.checkpoint_path);
      ModelConfig mc = cfg.model;
      mc.granularity = Granularity::block;
      Transformer t = Transformer::random(mc, mix_seed(cfg.base_train.seed, 0x1417));
      const auto res = train_base_model(t, train_tokens, cfg.base_train);
      std::ofstream log(cfg.out / "logs" / "base_train.csv");
      log << "step,loss\n";
      for (std::size_t s = 0; s < res.losses.size(); ++s) {
        log << s << ',' << fmt_fixed(res.losses[s], 6) << '\n';
      }
      save_checkpoint(t, cfg.out / "base.ckpt");
      return t;
    }();
    ModelConfig mc = base.config();
    mc.granularity = cfg.granularity;
    return Transformer(mc, base.weights());
  });

  const std::vector<McTask> tasks = stage("tasks", [&] {
    std::vector<McTask> t =
        cfg.tasks_path.empty()
            ? make_heldout_tasks(docs, split.heldout, split.reference_cluster, cfg.mc_tasks,
                                 cfg.mc_prompt_bytes, cfg.mc_choice_bytes, cfg.split_seed)
            : load_tasks(cfg.tasks_path);
    std::ofstream os(cfg.out / "tasks.jsonl");
    write_tasks(os, t);
    return t;
  });

  EvalReport report;
  report.notes.push_back("held-out set: " + fmt_g(100.0 * cfg.holdout_fraction) +
                         "% of each of " + std::to_string(reference_n) +
                         " reference clusters (" + std::to_string(split.heldout.size()) +
                         " of " + std::to_string(docs.size()) + " documents)");
  report.notes.push_back("per-cluster rows are grouped by reference cluster");
  report.notes.push_back(cfg.checkpoint_path.empty()
                             ? "base model trained once and shared by all seeds"
                             : "base model loaded from checkpoint");
  report.notes.push_back("multiple-choice tasks: " + std::to_string(tasks.size()));
  report.notes.push_back("flops% is the token-weighted analytic masked/dense ratio");

  const Context ctx{cfg, model, docs, tokens, split, tasks, reference_n};
  auto add_rows = [&](std::vector<EvalRow> rows) {
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  };
  auto save = [&](const MaskLibrary& lib, const std::string& name) {
    const std::string rel = "libraries/" + name + ".json";
    save_library(lib, cfg.out / rel);
    Heatmap h = heatmap_of(name, lib);
    std::ofstream os(cfg.out / "heatmaps" / (name + ".csv"));
    write_heatmap_csv(os, h);
    report.heatmaps.push_back(std::move(h));
    return rel;
  };

  // baseline calibration: a fixed seeded subset of training documents
  std::vector<std::vector<int>> calib;
  {
    std::vector<std::size_t> idx(train_tokens.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(cfg.split_seed, 0xb45e));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    idx.resize(std::min(idx.size(), cfg.baseline_calib_docs));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) calib.push_back(train_tokens[i]);
  }

  for (std::uint64_t seed : cfg.seeds) {
    stage("eval", [&] {
      EvalRow proto;
      proto.method = "dense";
      proto.seed = seed;
      add_rows(evaluate_library(ctx, nullptr, proto));
    });
    for (double sp : cfg.sparsities) {
      for (std::size_t n : cfg.clusters) {
        const std::string name = library_name("l0", n, sp, seed);
        LibraryTraining lt = stage("train-masks", [&] {
          return train_mask_library(model, encoder, train_embeddings, train_tokens, n, sp,
                                    cfg.mask_training, cfg.calibration_per_cluster, seed);
        });
        stage("train-masks", [&] {
          write_text(cfg.out / "clusters" / (name + ".json"),
                     cluster_model_to_json(lt.clusters).dump(2) + "\n");
          for (std::size_t k = 0; k < lt.per_cluster.size(); ++k) {
            std::ofstream os(cfg.out / "logs" / (name + "-c" + std::to_string(k) + ".csv"));
            write_training_log_csv(os, lt.per_cluster[k].log);
          }
        });
        const std::string rel = stage("binarize", [&] { return save(lt.library, name); });
        stage("eval", [&] {
          EvalRow proto;
          proto.method = "l0-routed";
          proto.n_clusters = n;
          proto.sparsity = sp;
          proto.seed = seed;
          proto.library = rel;
          add_rows(evaluate_library(ctx, &lt.library, proto));
        });
      }
      const std::size_t k = zeros_for_sparsity(sp, model.mask_size());
      auto run_baseline = [&](bool enabled, const char* tag, auto&& fn) {
        if (!enabled) return;
        const StaticMaskResult r = stage("baseline", fn);
        const MaskLibrary lib = static_mask_library(r, model, encoder.config(), sp);
        const std::string rel = save(lib, library_name(tag, 1, sp, seed));
        stage("eval", [&] {
          EvalRow proto;
          proto.method = r.method;
          proto.sparsity = sp;
          proto.seed = seed;
          proto.library = rel;
          add_rows(evaluate_library(ctx, &lib, proto));
        });
      };
      run_baseline(cfg.baseline_sleb, "sleb", [&] { return sleb_prune(model, calib, k); });
      run_baseline(cfg.baseline_oneshot, "oneshot",
                   [&] { return oneshot_importance_prune(model, calib, k); });
      run_baseline(cfg.baseline_evopress, "evopress", [&] {
        EvoPressOptions o = cfg.evopress;
        o.seed = seed;
        return evopress_search(model, calib, sp, o);
      });
    }
  }

  stage("report", [&] {
    {
      std::ofstream os(cfg.out / "report.csv");
      write_report_csv(os, report);
    }
    std::ofstream os(cfg.out / "summary.txt");
    write_summary(os, report, cfg);
  });
  return report;
}

}  // namespace depthroute
