// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud normalization, center sampling, and neighbourhood grouping.
//
// A cloud is divided into sub-regions exactly once per forward pass; every
// layer then reuses the same index table to gather its features. All distance
// ties resolve to the lowest point index, so each kernel is reproducible and
// can be compared exactly against a brute-force reference.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yogo/autodiff.hpp"

namespace yogo {

using Point3 = std::array<double, 3>;

struct PointCloud {
  std::vector<Point3> points;
  std::size_t feature_dim = 0;
  std::vector<double> features;  // N x feature_dim, row-major
  std::vector<int> labels;       // empty or one per point
  std::optional<int> class_id;

  std::size_t size() const { return points.size(); }
  bool has_labels() const { return !labels.empty(); }

  /// Throws std::invalid_argument when a structural invariant is broken.
  void validate() const;
  /// Copy with points/features/labels reordered so that out[i] = in[order[i]].
  PointCloud permuted(std::span<const std::size_t> order) const;
};

/// Per-axis min-max scaling into [0, 1]; a degenerate axis maps to 0.5.
PointCloud normalize(PointCloud cloud);

double squared_distance(const Point3& a, const Point3& b);

enum class Sampling { fps, random };
enum class Grouping { knn, ball };

std::string to_string(Sampling s);
std::string to_string(Grouping g);
Sampling parse_sampling(const std::string& text);
Grouping parse_grouping(const std::string& text);

struct SubRegionSpec {
  Sampling sampling = Sampling::fps;
  Grouping grouping = Grouping::knn;
  std::size_t num_regions = 32;  // L
  std::size_t group_size = 96;   // K
  double radius = 0.2;           // ball query only
};

/// The once-computed grouping: L center indices and an L x K member table.
struct SubRegionIndex {
  std::vector<std::size_t> centers;
  std::vector<std::size_t> members;  // row-major L x K
  std::size_t group_size = 0;
  SubRegionSpec method;

  std::size_t num_regions() const { return centers.size(); }
  std::span<const std::size_t> row(std::size_t j) const {
    return {members.data() + j * group_size, group_size};
  }
  /// Same regions with rows reordered: out row j = in row order[j].
  SubRegionIndex reordered(std::span<const std::size_t> order) const;
  /// Indices relabelled through a point permutation: new index of old point p is inverse[p].
  SubRegionIndex relabelled(std::span<const std::size_t> inverse) const;

  bool operator==(const SubRegionIndex& other) const {
    return centers == other.centers && members == other.members && group_size == other.group_size;
  }
};

/// Seeded start index, then greedy max-min distance selection.
std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t count, std::uint64_t seed);
std::vector<std::size_t> farthest_point_sampling_from(const PointCloud& cloud, std::size_t count, std::size_t start);

/// `count` distinct indices drawn uniformly without replacement.
std::vector<std::size_t> random_sampling(const PointCloud& cloud, std::size_t count, std::uint64_t seed);

/// Row j lists the K nearest points to centers[j], ordered by (distance, index).
std::vector<std::size_t> knn_group(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k);

/// Row j lists up to K points within `radius` in ascending index order, padded
/// by repeating the first qualifying index.
std::vector<std::size_t> ball_query_group(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k,
                                          double radius);

/// One sampling call followed by one grouping call.
SubRegionIndex build_subregions(const PointCloud& cloud, const SubRegionSpec& spec, std::uint64_t seed);

/// Differentiable gather of per-point features [N x C] into [L x K x C].
Var gather(Var features, const SubRegionIndex& sub);

/// Calls made on the current thread since the last reset. Used to assert
/// that a forward pass samples and groups exactly once.
struct KernelCounters {
  std::size_t sampling_calls = 0;
  std::size_t grouping_calls = 0;
};

KernelCounters& kernel_counters();
void reset_kernel_counters();

/// splitmix64 finaliser over a pair; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace yogo
