// Copyright (c) 2026, The depthroute Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthroute/kmeans.hpp"

#include <algorithm>
#include <map>

#include "depthroute/errors.hpp"
#include "depthroute/json_util.hpp"
#include "depthroute/rng.hpp"

namespace depthroute {
namespace {

using Index = std::ptrdiff_t;

std::vector<std::size_t> assign_all(std::span<const Embedding> embeddings,
                                    std::span<const Embedding> centroids,
                                    std::vector<double>& dist) {
  std::vector<std::size_t> out(embeddings.size());
  dist.assign(embeddings.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(embeddings.size()); ++i) {
    out[i] = nearest_centroid(centroids, embeddings[i], &dist[i]);
  }
  return out;
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
void repair_empty(std::span<const Embedding> embeddings, std::vector<Embedding>& centroids,
                  std::vector<std::size_t>& assign, std::vector<double>& dist) {
  const std::size_t k = centroids.size();
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assign) ++sizes[a];
    if (sizes[c] != 0) continue;
    std::size_t far = embeddings.size();
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      if (sizes[assign[i]] < 2) continue;
      if (far == embeddings.size() || dist[i] > dist[far]) far = i;
    }
    if (far == embeddings.size()) throw Error("k-means repair found no donor point");
    assign[far] = c;
    dist[far] = 0.0;
    centroids[c] = embeddings[far];
  }
}

void update_centroids(std::span<const Embedding> embeddings, std::vector<Embedding>& centroids,
                      std::span<const std::size_t> assign) {
  const std::size_t k = centroids.size();
  const std::size_t dim = centroids.front().size();
  std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    ++counts[assign[i]];
    for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += embeddings[i][d];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      centroids[c][d] = static_cast<float>(sums[c][d] / static_cast<double>(counts[c]));
    }
  }
}

}  // namespace

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

std::size_t nearest_centroid(std::span<const Embedding> centroids, std::span<const float> e,
                             double* distance) {
  std::size_t best = 0;
  double best_d = squared_distance(centroids[0], e);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(centroids[c], e);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

double compute_inertia(std::span<const Embedding> embeddings, std::span<const Embedding> centroids,
                       std::span<const std::size_t> assignments) {
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    total += squared_distance(embeddings[i], centroids[assignments[i]]);
  }
  return total;
}

ClusterModel kmeans_fit(std::span<const Embedding> embeddings, std::size_t n, std::uint64_t seed,
                        std::size_t max_iterations) {
  if (n == 0) throw ConfigError("cluster count must be >= 1");
  if (n > embeddings.size()) {
    throw ConfigError("cannot form " + std::to_string(n) + " clusters from " +
                      std::to_string(embeddings.size()) + " items");
  }
  const std::size_t dim = embeddings.front().size();
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw InputError("embeddings have inconsistent dimensions");
  }

  // k-means++ seeding.
  Rng rng(mix_seed(seed, 0x6b6d65616e73ULL));
  std::vector<Embedding> centroids;
  centroids.push_back(embeddings[rng.below(embeddings.size())]);
  std::vector<double> d2(embeddings.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) d2[i] = squared_distance(embeddings[i], centroids[0]);
  while (centroids.size() < n) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = embeddings.size() - 1;
      for (std::size_t i = 0; i < embeddings.size(); ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(embeddings.size());
    }
    centroids.push_back(embeddings[pick]);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(embeddings[i], centroids.back()));
    }
  }

  ClusterModel model;
  model.dim = dim;
  std::vector<double> dist;
  std::vector<std::size_t> assign = assign_all(embeddings, centroids, dist);
  repair_empty(embeddings, centroids, assign, dist);
  update_centroids(embeddings, centroids, assign);
  model.inertia_history.push_back(compute_inertia(embeddings, centroids, assign));

  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::vector<std::size_t> next = assign_all(embeddings, centroids, dist);
    if (next == assign) {
      model.converged = true;
      break;
    }
    assign = std::move(next);
    repair_empty(embeddings, centroids, assign, dist);
    update_centroids(embeddings, centroids, assign);
    model.inertia_history.push_back(compute_inertia(embeddings, centroids, assign));
    ++model.iterations;
  }
  model.centroids = std::move(centroids);
  model.assignments = std::move(assign);
  model.inertia = model.inertia_history.back();
  return model;
}

std::size_t assign(const ClusterModel& model, std::span<const float> e) {
  if (e.size() != model.dim) {
    throw InputError("embedding has dimension " + std::to_string(e.size()) + ", clusters use " +
                     std::to_string(model.dim));
  }
  return nearest_centroid(model.centroids, e);
}

double adjusted_rand_index(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw InputError("partitions cover different item counts");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1.0;
    ra[a[i]] += 1.0;
    rb[b[i]] += 1.0;
  }
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [_, c] : joint) index += choose2(c);
  for (const auto& [_, c] : ra) sa += choose2(c);
  for (const auto& [_, c] : rb) sb += choose2(c);
  const double expected = sa * sb / choose2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

nlohmann::ordered_json cluster_model_to_json(const ClusterModel& m) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["dim"] = m.dim;
  j["num_clusters"] = m.num_clusters();
  nlohmann::ordered_json cents = nlohmann::ordered_json::array();
  for (const auto& c : m.centroids) cents.push_back(sig9_array(c));
  j["centroids"] = std::move(cents);
  j["assignments"] = m.assignments;
  j["inertia"] = sig9(m.inertia);
  j["iterations"] = m.iterations;
  j["converged"] = m.converged;
  return j;
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
  ClusterModel m;
  try {
    m.dim = j.at("dim").get<std::size_t>();
    for (const auto& c : j.at("centroids")) m.centroids.push_back(c.get<Embedding>());
    m.assignments = j.at("assignments").get<std::vector<std::size_t>>();
    m.inertia = j.at("inertia").get<double>();
    m.iterations = j.value("iterations", std::size_t{0});
    m.converged = j.value("converged", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cluster model: ") + e.what());
  }
  m.inertia_history = {m.inertia};
  for (const auto& c : m.centroids) {
    if (c.size() != m.dim) throw ConfigError("cluster model centroid has wrong dimension");
  }
  return m;
}

}  // namespace depthroute
