// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include "depthroute/errors.hpp"
#include "depthroute/tokenizer.hpp"
#include "json.hpp"

namespace depthroute {
namespace {

// log-softmax value of `target` in one logit row, in double.
double log_prob(std::span<const float> row, int target) {
  double mx = row[0];
  for (float v : row) mx = std::max<double>(mx, v);
  double s = 0.0;
  for (float v : row) s += std::exp(static_cast<double>(v) - mx);
  return static_cast<double>(row[static_cast<std::size_t>(target)]) - mx - std::log(s);
}

}  // namespace

double PerplexityStats::perplexity() const { return std::exp(mean_nll()); }

PerplexityStats masked_nll(const Transformer& model, std::span<const int> mask,
                           std::span<const int> tokens) {
  PerplexityStats st;
  const std::size_t window = model.config().max_seq_len;
  const std::size_t vocab = model.config().vocab_size;
  for (std::size_t start = 0; start + 1 < tokens.size(); start += window) {
    const std::size_t n = std::min(window, tokens.size() - start);
    if (n < 2) break;
    KVCache cache(model.config());
    const Tensor logits = model.forward_infer(tokens.subspan(start, n), mask, cache);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const int target = tokens[start + i + 1];
      if (target < 0 || static_cast<std::size_t>(target) >= vocab) {
        throw IndexError("token id " + std::to_string(target) + " outside vocabulary");
      }
      st.nll_sum -= log_prob(logits.data().subspan(i * vocab, vocab), target);
      ++st.tokens;
    }
  }
  return st;
}

PerplexityStats masked_nll(const Transformer& model, std::span<const int> mask,
                           std::span<const std::vector<int>> sequences) {
  PerplexityStats st;
  for (const auto& s : sequences) st += masked_nll(model, mask, std::span<const int>(s));
  return st;
}

double evaluate_masked_ppl(const Transformer& model, std::span<const int> mask,
                           std::span<const std::vector<int>> sequences) {
  if (sequences.empty()) throw ConfigError("evaluation data is empty");
  const PerplexityStats st = masked_nll(model, mask, sequences);
  if (st.tokens == 0) throw ConfigError("evaluation data has no predictable tokens");
  return st.perplexity();
}

std::vector<McTask> parse_tasks(std::istream& is) {
  std::vector<McTask> tasks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), lineno);
    }
    if (!j.is_object() || !j.contains("prompt") || !j["prompt"].is_string() ||
        !j.contains("choices") || !j["choices"].is_array() || !j.contains("answer") ||
        !j["answer"].is_number_integer()) {
      throw ParseError("task record needs prompt (string), choices (array), answer (integer)",
                       lineno);
    }
    McTask t;
    t.prompt = j["prompt"].get<std::string>();
    for (const auto& c : j["choices"]) {
      if (!c.is_string()) throw ParseError("choices must be strings", lineno);
      t.choices.push_back(c.get<std::string>());
    }
    const auto answer = j["answer"].get<long long>();
    if (t.choices.empty()) throw ParseError("choices is empty", lineno);
    if (answer < 0 || static_cast<std::size_t>(answer) >= t.choices.size()) {
      throw ParseError("answer index " + std::to_string(answer) + " out of range", lineno);
    }
    t.answer = static_cast<std::size_t>(answer);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<McTask> load_tasks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tasks file " + path.string());
  return parse_tasks(in);
}

void write_tasks(std::ostream& os, std::span<const McTask> tasks) {
  for (const auto& t : tasks) {
    nlohmann::ordered_json j;
    j["prompt"] = t.prompt;
    j["choices"] = t.choices;
    j["answer"] = t.answer;
    os << j.dump() << '\n';
  }
}

double score_choice(const Transformer& model, std::span<const int> mask, std::string_view prompt,
                    std::string_view choice) {
  std::vector<int> ids = ByteTokenizer::encode(prompt, true);
  const std::size_t prefix = ids.size();
  const std::vector<int> tail = ByteTokenizer::encode(choice, false);
  if (tail.empty()) return 0.0;
  ids.insert(ids.end(), tail.begin(), tail.end());
  const std::size_t max_len = model.config().max_seq_len;
  if (ids.size() > max_len) {
    // keep the end of the prompt
    const std::size_t drop = ids.size() - max_len;
    if (drop >= prefix) throw LengthError("choice longer than max_seq_len");
    ids.erase(ids.begin() + 1, ids.begin() + 1 + static_cast<std::ptrdiff_t>(drop));
  }
  const std::size_t first = ids.size() - tail.size();
  KVCache cache(model.config());
  const Tensor logits = model.forward_infer(ids, mask, cache);
  const std::size_t vocab = model.config().vocab_size;
  double total = 0.0;
  for (std::size_t i = first; i < ids.size(); ++i) {
    total += log_prob(logits.data().subspan((i - 1) * vocab, vocab), ids[i]);
  }
  return total / static_cast<double>(tail.size());
}

std::size_t predict_choice(const Transformer& model, std::span<const int> mask,
                           const McTask& task) {
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t c = 0; c < task.choices.size(); ++c) {
    const double s = score_choice(model, mask, task.prompt, task.choices[c]);
    if (c == 0 || s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

double toy_multiple_choice_eval(const Transformer& model, std::span<const int> mask,
                                std::span<const McTask> tasks) {
  if (tasks.empty()) throw ConfigError("task list is empty");
  std::size_t correct = 0;
  for (const auto& t : tasks) correct += predict_choice(model, mask, t) == t.answer ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(tasks.size());
}

}  // namespace depthroute
