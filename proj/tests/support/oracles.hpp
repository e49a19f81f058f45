// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Slow reference implementations used to check the production kernels.

#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "yogo/geometry.hpp"

namespace yogo::testing {

inline double oracle_d2(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Recomputes every min-distance from scratch at every step: O(N^2 L).
inline std::vector<std::size_t> oracle_fps(const PointCloud& cloud, std::size_t count, std::size_t start) {
  std::vector<std::size_t> chosen{start};
  while (chosen.size() < count) {
    std::size_t best = cloud.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = oracle_d2(cloud.points[i], cloud.points[chosen[0]]);
      for (std::size_t c : chosen) d = std::min(d, oracle_d2(cloud.points[i], cloud.points[c]));
      if (best == cloud.size() || d > best_d) {
        best = i;
        best_d = d;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

// Full lexicographic sort of (distance, index) per center.
inline std::vector<std::size_t> oracle_knn(const PointCloud& cloud, std::span<const std::size_t> centers,
                                           std::size_t k) {
  std::vector<std::size_t> out;
  for (std::size_t c : centers) {
    std::vector<std::tuple<double, std::size_t>> all;
    for (std::size_t i = 0; i < cloud.size(); ++i) all.emplace_back(oracle_d2(cloud.points[i], cloud.points[c]), i);
    std::sort(all.begin(), all.end());
    for (std::size_t j = 0; j < k; ++j) out.push_back(std::get<1>(all[j]));
  }
  return out;
}

inline std::vector<std::size_t> oracle_ball(const PointCloud& cloud, std::span<const std::size_t> centers,
                                            std::size_t k, double radius) {
  std::vector<std::size_t> out;
  for (std::size_t c : centers) {
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (oracle_d2(cloud.points[i], cloud.points[c]) <= radius * radius) inside.push_back(i);
    }
    for (std::size_t j = 0; j < k; ++j) out.push_back(j < inside.size() ? inside[j] : inside.front());
  }
  return out;
}

// Set-based IoU: intersections and unions of index sets per part.
inline double oracle_cloud_iou(const std::vector<int>& preds, const std::vector<int>& labels,
                               const std::vector<int>& parts) {
  double total = 0.0;
  for (int p : parts) {
    std::set<std::size_t> a, b, u;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (preds[i] == p) a.insert(i);
      if (labels[i] == p) b.insert(i);
    }
    std::vector<std::size_t> inter;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(u, u.end()));
    total += u.empty() ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(u.size());
  }
  return total / static_cast<double>(parts.size());
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, std::size_t feature_dim = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud c;
  c.feature_dim = feature_dim;
  for (std::size_t i = 0; i < n; ++i) c.points.push_back({unit(rng), unit(rng), unit(rng)});
  for (std::size_t i = 0; i < n * feature_dim; ++i) c.features.push_back(unit(rng) - 0.5);
  return c;
}

// Coordinates on a coarse lattice, so many distances tie exactly.
inline PointCloud lattice_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cell(0, 3);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.push_back({0.25 * cell(rng), 0.25 * cell(rng), 0.25 * cell(rng)});
  }
  return c;
}

inline std::vector<std::size_t> random_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace yogo::testing
