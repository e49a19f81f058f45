// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace yogo {

void PointCloud::validate() const {
  if (points.empty()) throw std::invalid_argument("point cloud is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (double c : points[i]) {
      if (!std::isfinite(c)) throw std::invalid_argument("non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (features.size() != points.size() * feature_dim) {
    throw std::invalid_argument("feature table has " + std::to_string(features.size()) + " values, expected " +
                                std::to_string(points.size() * feature_dim));
  }
  if (!labels.empty() && labels.size() != points.size()) {
    throw std::invalid_argument("label count " + std::to_string(labels.size()) + " != point count " +
                                std::to_string(points.size()));
  }
}

PointCloud PointCloud::permuted(std::span<const std::size_t> order) const {
  if (order.size() != points.size()) throw std::invalid_argument("permutation length mismatch");
  PointCloud out;
  out.feature_dim = feature_dim;
  out.class_id = class_id;
  out.points.reserve(order.size());
  for (std::size_t i : order) {
    out.points.push_back(points.at(i));
    for (std::size_t f = 0; f < feature_dim; ++f) out.features.push_back(features[i * feature_dim + f]);
    if (!labels.empty()) out.labels.push_back(labels[i]);
  }
  return out;
}

PointCloud normalize(PointCloud cloud) {
  cloud.validate();
  for (std::size_t axis = 0; axis < 3; ++axis) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Point3& p : cloud.points) {
      lo = std::min(lo, p[axis]);
      hi = std::max(hi, p[axis]);
    }
    const double span = hi - lo;
    for (Point3& p : cloud.points) {
      // Clamp guards the last ulp; (hi - lo) / span can round above 1.
      p[axis] = span > 0.0 ? std::clamp((p[axis] - lo) / span, 0.0, 1.0) : 0.5;
    }
  }
  return cloud;
}

double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

std::string to_string(Sampling s) { return s == Sampling::fps ? "fps" : "random"; }
std::string to_string(Grouping g) { return g == Grouping::knn ? "knn" : "ball"; }

Sampling parse_sampling(const std::string& text) {
  if (text == "fps") return Sampling::fps;
  if (text == "random") return Sampling::random;
  throw std::invalid_argument("unknown sampling method '" + text + "' (expected fps|random)");
}

Grouping parse_grouping(const std::string& text) {
  if (text == "knn") return Grouping::knn;
  if (text == "ball") return Grouping::ball;
  throw std::invalid_argument("unknown grouping method '" + text + "' (expected knn|ball)");
}

SubRegionIndex SubRegionIndex::reordered(std::span<const std::size_t> order) const {
  SubRegionIndex out;
  out.group_size = group_size;
  out.method = method;
  for (std::size_t j : order) {
    out.centers.push_back(centers.at(j));
    auto r = row(j);
    out.members.insert(out.members.end(), r.begin(), r.end());
  }
  return out;
}

SubRegionIndex SubRegionIndex::relabelled(std::span<const std::size_t> inverse) const {
  SubRegionIndex out = *this;
  for (auto& c : out.centers) c = inverse[c];
  for (auto& m : out.members) m = inverse[m];
  return out;
}

// ---------------------------------------------------------------------------

namespace {

thread_local KernelCounters t_counters;

void check_count(const PointCloud& cloud, std::size_t count, const char* op) {
  cloud.validate();
  if (count < 1 || count > cloud.size()) {
    throw std::invalid_argument(std::string(op) + ": requested " + std::to_string(count) + " centers from " +
                                std::to_string(cloud.size()) + " points");
  }
}

void check_centers(const PointCloud& cloud, std::span<const std::size_t> centers, const char* op) {
  for (std::size_t c : centers) {
    if (c >= cloud.size()) {
      throw std::out_of_range(std::string(op) + ": center " + std::to_string(c) + " >= " +
                              std::to_string(cloud.size()));
    }
  }
}

}  // namespace

KernelCounters& kernel_counters() { return t_counters; }
void reset_kernel_counters() { t_counters = {}; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::size_t> farthest_point_sampling_from(const PointCloud& cloud, std::size_t count,
                                                      std::size_t start) {
  check_count(cloud, count, "farthest_point_sampling");
  if (start >= cloud.size()) throw std::out_of_range("farthest_point_sampling: start index out of range");
  ++t_counters.sampling_calls;

  const std::size_t n = cloud.size();
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> centers;
  centers.reserve(count);
  std::size_t current = start;
  for (std::size_t step = 0; step < count; ++step) {
    centers.push_back(current);
    taken[current] = 1;
    if (step + 1 == count) break;
    const Point3& c = cloud.points[current];
    std::size_t best = n;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], squared_distance(cloud.points[i], c));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return centers;
}

std::vector<std::size_t> farthest_point_sampling(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  check_count(cloud, count, "farthest_point_sampling");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  return farthest_point_sampling_from(cloud, count, pick(rng));
}

std::vector<std::size_t> random_sampling(const PointCloud& cloud, std::size_t count, std::uint64_t seed) {
  check_count(cloud, count, "random_sampling");
  ++t_counters.sampling_calls;
  std::vector<std::size_t> idx(cloud.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first `count` slots are a uniform draw without replacement.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

std::vector<std::size_t> knn_group(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k) {
  cloud.validate();
  check_centers(cloud, centers, "knn_group");
  if (k < 1 || k > cloud.size()) {
    throw std::invalid_argument("knn_group: K=" + std::to_string(k) + " not in [1, " + std::to_string(cloud.size()) +
                                "]");
  }
  ++t_counters.grouping_calls;

  const std::size_t n = cloud.size();
  std::vector<std::size_t> members;
  members.reserve(centers.size() * k);
  std::vector<std::pair<double, std::size_t>> scratch(n);
  for (std::size_t c : centers) {
    const Point3& q = cloud.points[c];
    for (std::size_t i = 0; i < n; ++i) scratch[i] = {squared_distance(cloud.points[i], q), i};
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    for (std::size_t i = 0; i < k; ++i) members.push_back(scratch[i].second);
  }
  return members;
}

std::vector<std::size_t> ball_query_group(const PointCloud& cloud, std::span<const std::size_t> centers, std::size_t k,
                                          double radius) {
  cloud.validate();
  check_centers(cloud, centers, "ball_query_group");
  if (k < 1) throw std::invalid_argument("ball_query_group: K must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("ball_query_group: radius must be > 0");
  ++t_counters.grouping_calls;

  const double r2 = radius * radius;
  std::vector<std::size_t> members;
  members.reserve(centers.size() * k);
  for (std::size_t c : centers) {
    const Point3& q = cloud.points[c];
    const std::size_t row_start = members.size();
    for (std::size_t i = 0; i < cloud.size() && members.size() - row_start < k; ++i) {
      if (squared_distance(cloud.points[i], q) <= r2) members.push_back(i);
    }
    // The center itself qualifies, so the row holds at least one index.
    const std::size_t first = members[row_start];
    while (members.size() - row_start < k) members.push_back(first);
  }
  return members;
}

SubRegionIndex build_subregions(const PointCloud& cloud, const SubRegionSpec& spec, std::uint64_t seed) {
  SubRegionIndex sub;
  sub.method = spec;
  sub.group_size = spec.group_size;
  sub.centers = spec.sampling == Sampling::fps ? farthest_point_sampling(cloud, spec.num_regions, seed)
                                               : random_sampling(cloud, spec.num_regions, seed);
  sub.members = spec.grouping == Grouping::knn ? knn_group(cloud, sub.centers, spec.group_size)
                                               : ball_query_group(cloud, sub.centers, spec.group_size, spec.radius);
  return sub;
}

Var gather(Var features, const SubRegionIndex& sub) {
  return gather_rows(features, sub.members, Shape{sub.num_regions(), sub.group_size});
}

}  // namespace yogo
