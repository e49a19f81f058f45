// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "support/oracles.hpp"
#include "yogo/geometry.hpp"

using namespace yogo;
using namespace yogo::testing;

namespace {

std::vector<std::size_t> sorted(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST_CASE("normalize") {
  PointCloud cube;
  for (int i = 0; i < 8; ++i) cube.points.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
  CHECK(normalize(cube).points == cube.points);

  PointCloud same;
  same.points.assign(5, {3.0, -1.0, 2.0});
  for (const Point3& p : normalize(same).points) CHECK(p == Point3{0.5, 0.5, 0.5});

  const PointCloud n = normalize(random_cloud(100, 3));
  for (int a = 0; a < 3; ++a) {
    double lo = 1.0, hi = 0.0;
    for (const Point3& p : n.points) {
      lo = std::min(lo, p[a]);
      hi = std::max(hi, p[a]);
      CHECK(p[a] >= 0.0);
      CHECK(p[a] <= 1.0);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
  }
}

TEST_CASE("point cloud validation") {
  PointCloud c = random_cloud(4, 1);
  c.labels = {0, 1};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  PointCloud d = random_cloud(4, 1);
  d.points[2][1] = std::nan("");
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  CHECK_THROWS_AS(PointCloud{}.validate(), std::invalid_argument);
}

TEST_CASE("farthest point sampling") {
  const PointCloud c = random_cloud(40, 5);
  CHECK(sorted(farthest_point_sampling(c, 40, 1)) == iota_n(40));

  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> pick(0, 39);
  CHECK(farthest_point_sampling(c, 1, 77) == std::vector<std::size_t>{pick(rng)});

  // Six points on a line: from 0 the farthest is 5, then the point farthest
  // from both ends is 2 (distance 2 to index 0 ties with 3's distance 2 to 5;
  // the lower index wins).
  PointCloud line;
  for (int i = 0; i < 6; ++i) line.points.push_back({double(i), 0.0, 0.0});
  const auto got = farthest_point_sampling_from(line, 3, 0);
  CHECK(got == std::vector<std::size_t>{0, 5, 2});
  CHECK(got == oracle_fps(line, 3, 0));

  CHECK_THROWS_AS(farthest_point_sampling(c, 41, 0), std::invalid_argument);
  CHECK_THROWS_AS(farthest_point_sampling(c, 0, 0), std::invalid_argument);
}

TEST_CASE("random sampling") {
  const PointCloud c = random_cloud(30, 2);
  CHECK(sorted(random_sampling(c, 30, 4)) == iota_n(30));
  CHECK(random_sampling(c, 10, 9) == random_sampling(c, 10, 9));

  // Each draw of L = 5 from N = 20 includes a given index with probability
  // 1/4; over 10^4 draws every count must sit within 3 sigma of 2500.
  const PointCloud small = random_cloud(20, 3);
  std::vector<double> hist(20, 0.0);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    for (std::size_t i : random_sampling(small, 5, s)) hist[i] += 1.0;
  }
  const double mean = 2500.0, sigma = std::sqrt(10000.0 * 0.25 * 0.75);
  for (double h : hist) CHECK(std::abs(h - mean) <= 3.0 * sigma);
}

TEST_CASE("knn grouping") {
  const PointCloud c = random_cloud(64, 6);
  const auto centers = farthest_point_sampling(c, 4, 1);
  const auto k1 = knn_group(c, centers, 1);
  CHECK(k1 == centers);
  const auto all = knn_group(c, centers, 64);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(sorted({all.begin() + j * 64, all.begin() + (j + 1) * 64}) == iota_n(64));
  }
  CHECK(knn_group(c, centers, 8) == oracle_knn(c, centers, 8));

  const PointCloud lattice = lattice_cloud(80, 4);
  const auto lc = farthest_point_sampling(lattice, 6, 2);
  CHECK(knn_group(lattice, lc, 20) == oracle_knn(lattice, lc, 20));
  CHECK_THROWS_AS(knn_group(c, centers, 65), std::invalid_argument);
}

TEST_CASE("ball query grouping") {
  const PointCloud c = random_cloud(50, 7);
  const auto centers = farthest_point_sampling(c, 5, 3);
  SUBCASE("a radius covering the cloud returns knn's member sets") {
    const auto ball = ball_query_group(c, centers, 50, 2.0);
    const auto knn = knn_group(c, centers, 50);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(sorted({ball.begin() + j * 50, ball.begin() + (j + 1) * 50}) ==
            sorted({knn.begin() + j * 50, knn.begin() + (j + 1) * 50}));
    }
  }
  SUBCASE("an isolated center pads with itself") {
    PointCloud iso = random_cloud(10, 8);
    for (Point3& p : iso.points) p[0] *= 0.1;
    iso.points.push_back({10.0, 10.0, 10.0});
    const std::vector<std::size_t> center{10};
    CHECK(ball_query_group(iso, center, 4, 0.5) == std::vector<std::size_t>{10, 10, 10, 10});
  }
  SUBCASE("every unpadded member lies within the radius") {
    const auto ball = ball_query_group(c, centers, 16, 0.2);
    for (std::size_t j = 0; j < 5; ++j) {
      std::set<std::size_t> seen;
      for (std::size_t k = 0; k < 16; ++k) {
        const std::size_t i = ball[j * 16 + k];
        CHECK(squared_distance(c.points[i], c.points[centers[j]]) <= 0.04);
        seen.insert(i);
      }
    }
    CHECK(ball == oracle_ball(c, centers, 16, 0.2));
  }
  CHECK_THROWS_AS(ball_query_group(c, centers, 4, 0.0), std::invalid_argument);
}

TEST_CASE("build_subregions and the call counters") {
  const PointCloud c = random_cloud(2048, 9);
  SubRegionSpec spec;  // L = 32, K = 96
  reset_kernel_counters();
  const SubRegionIndex a = build_subregions(c, spec, 5);
  CHECK(kernel_counters().sampling_calls == 1);
  CHECK(kernel_counters().grouping_calls == 1);
  CHECK(a.centers.size() == 32);
  CHECK(a.members.size() == 32 * 96);
  CHECK(a == build_subregions(c, spec, 5));
  for (std::size_t i : a.members) CHECK(i < 2048);
}

TEST_CASE("subregion reorder and relabel") {
  const PointCloud c = random_cloud(30, 10);
  SubRegionSpec spec;
  spec.num_regions = 4;
  spec.group_size = 5;
  const SubRegionIndex sub = build_subregions(c, spec, 1);
  const std::vector<std::size_t> order{2, 0, 3, 1};
  const SubRegionIndex r = sub.reordered(order);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(r.centers[j] == sub.centers[order[j]]);
    CHECK(std::equal(r.row(j).begin(), r.row(j).end(), sub.row(order[j]).begin()));
  }
  const auto perm = random_permutation(30, 3);
  std::vector<std::size_t> inverse(30);
  for (std::size_t i = 0; i < 30; ++i) inverse[perm[i]] = i;
  const SubRegionIndex l = sub.relabelled(inverse);
  for (std::size_t k = 0; k < sub.members.size(); ++k) CHECK(perm[l.members[k]] == sub.members[k]);
}

TEST_CASE("gather") {
  Tape tape;
  Tensor f({6, 2});
  for (std::size_t i = 0; i < 12; ++i) f[i] = double(i);
  SubRegionIndex sub;
  sub.centers = {0, 3};
  sub.group_size = 3;
  sub.members = {0, 1, 2, 3, 3, 3};
  Var x = tape.variable(f);
  Var g = gather(x, sub);
  CHECK(g.shape() == Shape{2, 3, 2});
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(g.value()[k * 2] == f.at(k, 0));
    CHECK(g.value()[(3 + k) * 2 + 1] == f.at(3, 1));
  }
  // Gradient of the sum counts each point's occurrences.
  tape.backward(sum(g));
  const Tensor grad = tape.grad(x);
  const double counts[] = {1, 1, 1, 3, 0, 0};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(grad.at(i, 0) == counts[i]);
    CHECK(grad.at(i, 1) == counts[i]);
  }
}

TEST_CASE("method names round-trip") {
  CHECK(parse_sampling("fps") == Sampling::fps);
  CHECK(parse_grouping(to_string(Grouping::ball)) == Grouping::ball);
  CHECK_THROWS_AS(parse_sampling("uniform"), std::invalid_argument);
}
