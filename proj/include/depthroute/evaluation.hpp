// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// Held-out perplexity and likelihood-scored multiple choice under a binary mask.

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "depthroute/model.hpp"

namespace depthroute {

struct PerplexityStats {
  double nll_sum = 0.0;
  std::size_t tokens = 0;

  double mean_nll() const { return tokens == 0 ? 0.0 : nll_sum / static_cast<double>(tokens); }
  double perplexity() const;
  PerplexityStats& operator+=(const PerplexityStats& o) {
    nll_sum += o.nll_sum;
    tokens += o.tokens;
    return *this;
  }
};

/// Next-token NLL of one sequence via forward_infer. Sequences longer than
/// max_seq_len are split into independent windows, each with a fresh cache.
PerplexityStats masked_nll(const Transformer& model, std::span<const int> mask,
                           std::span<const int> tokens);

PerplexityStats masked_nll(const Transformer& model, std::span<const int> mask,
                           std::span<const std::vector<int>> sequences);

/// exp(mean token NLL). Throws ConfigError on empty data.
double evaluate_masked_ppl(const Transformer& model, std::span<const int> mask,
                           std::span<const std::vector<int>> sequences);

struct McTask {
  std::string prompt;
  std::vector<std::string> choices;
  std::size_t answer = 0;
};

/// JSON lines {prompt, choices: [...], answer}. Throws ParseError with the
/// 1-based line number on a malformed record. Blank lines are skipped.
std::vector<McTask> parse_tasks(std::istream& is);
std::vector<McTask> load_tasks(const std::filesystem::path& path);
void write_tasks(std::ostream& os, std::span<const McTask> tasks);

/// Mean log-probability of the choice tokens given the prompt.
double score_choice(const Transformer& model, std::span<const int> mask, std::string_view prompt,
                    std::string_view choice);

/// Index of the best-scoring choice; ties go to the lowest index.
std::size_t predict_choice(const Transformer& model, std::span<const int> mask,
                           const McTask& task);

/// Fraction of tasks answered correctly. Throws ConfigError on an empty list.
double toy_multiple_choice_eval(const Transformer& model, std::span<const int> mask,
                                std::span<const McTask> tasks);

}  // namespace depthroute
