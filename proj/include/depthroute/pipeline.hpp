// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end experiment driver.
//
// Stages: corpus → base model → encode → split → for every seed and cluster
// count: cluster → train masks → binarize → library → routed evaluation;
// for every seed and sparsity: static baselines. Artifacts land under
// cfg.out as they are produced, so a failed run leaves them for inspection.
//
// Held-out split: documents are clustered once at the largest configured N
// (the reference clustering) and the last holdout_fraction of each
// reference cluster, in a seeded shuffle, is held out. Every method and
// every N is scored on the same held-out documents, and per-cluster report
// rows refer to reference clusters.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthroute/base_trainer.hpp"
#include "depthroute/baselines.hpp"
#include "depthroute/corpus.hpp"
#include "depthroute/encoder.hpp"
#include "depthroute/evaluation.hpp"
#include "depthroute/kmeans.hpp"
#include "depthroute/mask_library.hpp"
#include "depthroute/mask_trainer.hpp"
#include "depthroute/model.hpp"
#include "json.hpp"

namespace depthroute {

inline constexpr int kExperimentSchemaVersion = 1;

struct ExperimentConfig {
  ModelConfig model;
  /// Existing corpus (directory or file); empty means synthesize one.
  std::filesystem::path corpus_path;
  CorpusSpec synthetic;
  /// Existing base checkpoint; empty means train one.
  std::filesystem::path checkpoint_path;
  BaseTrainConfig base_train;
  EncoderConfig encoder;
  std::vector<std::size_t> clusters = {4};
  std::vector<double> sparsities = {0.25};
  Granularity granularity = Granularity::block;
  std::vector<std::uint64_t> seeds = {0};
  TrainingConfig mask_training;
  std::size_t calibration_per_cluster = 1000;
  double holdout_fraction = 0.1;
  std::uint64_t split_seed = 0;
  bool baseline_sleb = true;
  bool baseline_oneshot = true;
  bool baseline_evopress = true;
  std::size_t baseline_calib_docs = 32;
  EvoPressOptions evopress;
  /// Multiple-choice tasks: a JSONL file, or generated from held-out docs.
  std::filesystem::path tasks_path;
  std::size_t mc_tasks = 32;
  std::size_t mc_prompt_bytes = 48;
  std::size_t mc_choice_bytes = 16;
  std::filesystem::path out = "out";

  /// Throws ConfigError on violated invariants or missing paths.
  void validate() const;
};

/// Unknown keys are rejected at every level.
ExperimentConfig experiment_from_json(const nlohmann::json& json);
nlohmann::ordered_json experiment_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment(const std::filesystem::path& path);

struct EvalRow {
  std::string method;  // dense, l0-routed, sleb, oneshot-ppl, evopress
  std::size_t n_clusters = 1;
  double sparsity = 0.0;
  std::uint64_t seed = 0;
  /// -1 for the overall row, otherwise the reference cluster.
  int cluster = -1;
  std::size_t tokens = 0;
  double nll = 0.0;  // mean per token
  double ppl = 0.0;
  /// Overall rows only; NaN elsewhere.
  double mc_accuracy = 0.0;
  double flops_percentage = 1.0;
  std::string library;  // relative artifact path, empty for dense
};

struct Heatmap {
  std::string name;
  std::vector<BinaryMask> rows;  // clusters × blocks
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<Heatmap> heatmaps;
  std::vector<std::string> notes;
};

void write_report_csv(std::ostream& os, const EvalReport& report);
void write_summary(std::ostream& os, const EvalReport& report, const ExperimentConfig& cfg);
void write_heatmap_csv(std::ostream& os, const Heatmap& heatmap);

// ---- building blocks shared with the CLI stages ----

std::vector<std::vector<int>> tokenize_documents(std::span<const Document> docs);

/// Hashed encoders are IDF-fitted on `docs`; external encoders load their file.
Encoder build_encoder(const EncoderConfig& config, std::span<const Document> docs);

std::vector<Embedding> encode_documents(const Encoder& encoder, std::span<const Document> docs);

struct DataSplit {
  std::vector<std::size_t> train;    // document indices
  std::vector<std::size_t> heldout;  // document indices
  std::vector<std::size_t> reference_cluster;  // per document
};

DataSplit split_heldout(std::span<const Embedding> embeddings, std::size_t reference_n,
                        double holdout_fraction, std::uint64_t seed);

struct LibraryTraining {
  MaskLibrary library;
  ClusterModel clusters;
  std::vector<MaskTrainingResult> per_cluster;
};

/// Trains one mask per cluster of `clusters` at `sparsity` on at most
/// calibration_per_cluster documents each and assembles the library.
LibraryTraining train_mask_library(const Transformer& model, const EncoderConfig& encoder,
                                   ClusterModel clusters, std::span<const std::vector<int>> tokens,
                                   double sparsity, const TrainingConfig& mask_cfg,
                                   std::size_t calibration_per_cluster, std::uint64_t seed);

/// Clusters the calibration documents into n groups first.
LibraryTraining train_mask_library(const Transformer& model, const Encoder& encoder,
                                   std::span<const Embedding> embeddings,
                                   std::span<const std::vector<int>> tokens, std::size_t n,
                                   double sparsity, const TrainingConfig& mask_cfg,
                                   std::size_t calibration_per_cluster, std::uint64_t seed);

/// Builds multiple-choice tasks from held-out documents: the true
/// continuation of a prompt against continuations at the same offset in other
/// documents, taken from the same reference cluster when possible.
std::vector<McTask> make_heldout_tasks(std::span<const Document> docs,
                                       std::span<const std::size_t> heldout,
                                       std::span<const std::size_t> reference_cluster,
                                       std::size_t max_tasks, std::size_t prompt_bytes,
                                       std::size_t choice_bytes, std::uint64_t seed);

EvalReport run_pipeline(const ExperimentConfig& cfg);

}  // namespace depthroute
