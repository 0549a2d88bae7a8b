// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "depthroute/checkpoint.hpp"
#include "depthroute/evaluation.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/pipeline.hpp"
#include "depthroute/router.hpp"
#include "depthroute/tokenizer.hpp"

namespace testing_helpers {

using namespace depthroute;

/// A pipeline that finishes in seconds.
inline ExperimentConfig tiny_experiment(const std::filesystem::path& out) {
  ExperimentConfig c;
  c.model.num_layers = 2;
  c.model.hidden_dim = 16;
  c.model.num_heads = 2;
  c.model.head_dim = 8;
  c.model.kv_heads = 1;
  c.model.ffn_dim = 32;
  c.model.max_seq_len = 64;
  c.synthetic.num_domains = 4;
  c.synthetic.docs_per_domain = 10;
  c.synthetic.doc_len = 96;
  c.base_train.steps = 20;
  c.base_train.batch_size = 4;
  c.base_train.seq_len = 32;
  c.clusters = {1, 2};
  c.sparsities = {0.25};
  c.mask_training.batch_size = 2;
  c.mask_training.train_seq_len = 32;
  c.mask_training.max_steps = 12;
  c.baseline_calib_docs = 4;
  c.evopress.generations = 2;
  c.evopress.population = 3;
  c.mc_tasks = 6;
  c.mc_prompt_bytes = 24;
  c.mc_choice_bytes = 8;
  c.out = out;
  return c;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Re-evaluates a row's library from its file: routes every held-out
/// document of the run and returns the perplexity.
inline double reevaluate_row(const std::filesystem::path& out, const EvalRow& row) {
  const std::vector<Document> docs = load_corpus(out / "corpus");
  std::ifstream split(out / "split.csv");
  std::string line;
  std::getline(split, line);
  std::vector<std::string> heldout;
  while (std::getline(split, line)) {
    if (line.ends_with(",heldout")) heldout.push_back(line.substr(0, line.find(',')));
  }
  const Transformer base = load_checkpoint(out / "base.ckpt");
  std::optional<Router> router;
  if (!row.library.empty()) router.emplace(load_library(out / row.library));
  PerplexityStats total;
  for (const auto& doc : docs) {
    if (std::find(heldout.begin(), heldout.end(), doc.id) == heldout.end()) continue;
    const BinaryMask mask =
        router ? router->route(doc.text, doc.id).mask : BinaryMask(base.mask_size(), 1);
    total += masked_nll(base, mask, ByteTokenizer::encode(doc.text, true));
  }
  return total.perplexity();
}

}  // namespace testing_helpers
