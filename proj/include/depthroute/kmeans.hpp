// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0
//
// K-means over sentence embeddings: k-means++ seeding, Lloyd iterations until
// the assignment reaches a fixpoint (capped), farthest-point repair of empty
// clusters.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace depthroute {

using Embedding = std::vector<float>;

struct ClusterModel {
  std::size_t dim = 0;
  std::vector<Embedding> centroids;
  std::vector<std::size_t> assignments;
  double inertia = 0.0;
  /// Inertia after each Lloyd update, first entry after seeding.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
  bool converged = false;

  std::size_t num_clusters() const { return centroids.size(); }
};

double squared_distance(std::span<const float> a, std::span<const float> b);

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
std::size_t nearest_centroid(std::span<const Embedding> centroids, std::span<const float> e,
                             double* distance = nullptr);

/// Throws ConfigError when n is 0 or exceeds the number of embeddings.
ClusterModel kmeans_fit(std::span<const Embedding> embeddings, std::size_t n, std::uint64_t seed,
                        std::size_t max_iterations = 300);

/// Throws InputError on a dimension mismatch.
std::size_t assign(const ClusterModel& model, std::span<const float> e);

/// Sum of squared distances of each point to the centroid it is assigned to.
double compute_inertia(std::span<const Embedding> embeddings, std::span<const Embedding> centroids,
                       std::span<const std::size_t> assignments);

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b);

nlohmann::ordered_json cluster_model_to_json(const ClusterModel& model);
ClusterModel cluster_model_from_json(const nlohmann::json& json);

}  // namespace depthroute
