// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Point-cloud text files, directory datasets, synthetic labelled shapes, and
// seeded batching.
//
// Text cloud format, one point per line:
//
//   # columns: x y z f:F label:0|1
//   # class: <id>                      (optional)
//   x y z [f1 ... fF] [label]
//
// Without a columns line, three columns mean bare coordinates and any extra
// columns are treated as features. `#` starts a comment anywhere on a line.

#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "yogo/geometry.hpp"

namespace yogo {

struct CloudRecord {
  PointCloud cloud;
  std::string source_id;
  std::string split;
  std::vector<int> part_set;  // parts valid for this cloud; empty = infer from labels
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

PointCloud parse_cloud_text(std::istream& in, const std::string& source = "<stream>");
void write_cloud_text(std::ostream& out, const PointCloud& cloud);

CloudRecord load_cloud_text(const std::string& path);
void save_cloud_text(const std::string& path, const PointCloud& cloud);

/// Writes `<dir>/<source_id>.txt` per record plus `<dir>/manifest.txt`.
void write_dataset(const std::string& dir, const std::vector<CloudRecord>& records);
/// Loads records listed in `<dir>/manifest.txt`; an empty split loads all.
std::vector<CloudRecord> load_dataset(const std::string& dir, const std::string& split = "");

// ---------------------------------------------------------------------------
// Synthetic shapes.

enum class ShapeFamily { lollipop, barbell, table };

std::string to_string(ShapeFamily f);
ShapeFamily parse_family(const std::string& text);

struct FamilyInfo {
  ShapeFamily family;
  int class_id;
  std::vector<int> parts;        // global part ids
  std::vector<double> quota;     // fraction of points per part
};

const FamilyInfo& family_info(ShapeFamily family);
/// Total number of distinct part ids across all families.
std::size_t synthetic_num_parts();
std::size_t synthetic_num_classes();

/// Exact per-part point counts (largest-remainder rounding of the quotas).
std::vector<std::size_t> part_point_counts(ShapeFamily family, std::size_t points);

struct Primitive {
  enum class Kind { sphere, cylinder, box };
  Kind kind = Kind::sphere;
  Point3 a{};            // sphere/box center, cylinder start
  Point3 b{};            // cylinder end
  double radius = 0.0;   // sphere/cylinder
  Point3 half_extent{};  // box
  int part = 0;

  /// Negative inside, zero on the surface.
  double signed_distance(const Point3& p) const;
  double surface_area() const;
  Point3 sample_surface(std::mt19937_64& rng) const;
};

struct SyntheticShape {
  ShapeFamily family;
  std::vector<Primitive> primitives;
};

struct SyntheticSpec {
  std::vector<ShapeFamily> families{ShapeFamily::lollipop, ShapeFamily::barbell, ShapeFamily::table};
  std::size_t num_clouds = 200;
  std::size_t points_per_cloud = 256;
  double noise_sigma = 0.02;
  std::uint64_t seed = 0;
  std::string split = "train";
  std::string id_prefix = "synth";
};

/// The primitive layout of each cloud; cloud i uses families[i % families.size()].
std::vector<SyntheticShape> synthetic_shapes(const SyntheticSpec& spec);

/// Surface samples labelled by their generating primitive, then Gaussian
/// coordinate noise. Samples that fall inside another primitive are redrawn.
std::vector<CloudRecord> generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------

/// Shuffled index batches; the last batch keeps the remainder.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t shuffle_seed);

}  // namespace yogo
