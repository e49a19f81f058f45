// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "yogo/config.hpp"

namespace yogo {

namespace fs = std::filesystem;

ParseError::ParseError(const std::string& source, std::size_t line, std::size_t column, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

bool parse_size_token(const std::string& tok, std::size_t& out) {
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

struct Columns {
  std::size_t features = 0;
  bool label = false;
  std::size_t count() const { return 3 + features + (label ? 1 : 0); }
};

Columns parse_columns_directive(const std::string& body, const std::string& source, std::size_t lineno) {
  const auto toks = split_ws(body);
  auto fail = [&](const std::string& why) { throw ParseError(source, lineno, 0, "bad columns line: " + why); };
  if (toks.size() < 3 || toks[0] != "x" || toks[1] != "y" || toks[2] != "z") fail("must start with 'x y z'");
  Columns c;
  for (std::size_t i = 3; i < toks.size(); ++i) {
    std::size_t v = 0;
    if (toks[i].rfind("f:", 0) == 0 && parse_size_token(toks[i].substr(2), v)) {
      c.features = v;
    } else if (toks[i].rfind("label:", 0) == 0 && parse_size_token(toks[i].substr(6), v) && v <= 1) {
      c.label = v == 1;
    } else {
      fail("unknown column spec '" + toks[i] + "'");
    }
  }
  return c;
}

}  // namespace

PointCloud parse_cloud_text(std::istream& in, const std::string& source) {
  PointCloud cloud;
  std::optional<Columns> columns;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      const std::string comment = line.substr(hash + 1);
      line.resize(hash);
      const auto toks = split_ws(comment);
      if (split_ws(line).empty() && !toks.empty()) {
        if (toks[0] == "columns:") {
          if (columns) throw ParseError(source, lineno, 0, "columns line after data or repeated");
          columns = parse_columns_directive(comment.substr(comment.find("columns:") + 8), source, lineno);
          continue;
        }
        if (toks[0] == "class:") {
          std::size_t id = 0;
          if (toks.size() != 2 || !parse_size_token(toks[1], id)) {
            throw ParseError(source, lineno, 0, "bad class line");
          }
          cloud.class_id = static_cast<int>(id);
          continue;
        }
      }
    }
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (!columns) {
      if (toks.size() < 3) {
        throw ParseError(source, lineno, toks.size() + 1, "expected at least 3 columns, found " +
                                                              std::to_string(toks.size()));
      }
      columns = Columns{toks.size() - 3, false};
    }
    if (toks.size() != columns->count()) {
      throw ParseError(source, lineno, std::min(toks.size(), columns->count()) + 1,
                       "expected " + std::to_string(columns->count()) + " columns, found " +
                           std::to_string(toks.size()));
    }
    const std::size_t numeric = 3 + columns->features;
    double values[3];
    for (std::size_t c = 0; c < numeric; ++c) {
      const std::string& tok = toks[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError(source, lineno, c + 1, "non-numeric token '" + tok + "'");
      }
      if (!std::isfinite(v)) throw ParseError(source, lineno, c + 1, "non-finite value '" + tok + "'");
      if (c < 3) {
        values[c] = v;
      } else {
        cloud.features.push_back(v);
      }
    }
    cloud.points.push_back({values[0], values[1], values[2]});
    if (columns->label) {
      std::size_t label = 0;
      if (!parse_size_token(toks[numeric], label) || label > static_cast<std::size_t>(std::numeric_limits<int>::max())) {
        throw ParseError(source, lineno, numeric + 1, "label '" + toks[numeric] + "' is not a non-negative integer");
      }
      cloud.labels.push_back(static_cast<int>(label));
    }
  }
  if (cloud.points.empty()) throw ParseError(source, lineno, 0, "no points");
  cloud.feature_dim = columns->features;
  return cloud;
}

void write_cloud_text(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  out << "# columns: x y z f:" << cloud.feature_dim << " label:" << (cloud.has_labels() ? 1 : 0) << '\n';
  if (cloud.class_id) out << "# class: " << *cloud.class_id << '\n';
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out << format_double(cloud.points[i][0]) << ' ' << format_double(cloud.points[i][1]) << ' '
        << format_double(cloud.points[i][2]);
    for (std::size_t f = 0; f < cloud.feature_dim; ++f) out << ' ' << format_double(cloud.features[i * cloud.feature_dim + f]);
    if (cloud.has_labels()) out << ' ' << cloud.labels[i];
    out << '\n';
  }
}

CloudRecord load_cloud_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cloud file " + path);
  CloudRecord rec;
  rec.cloud = parse_cloud_text(in, path);
  rec.source_id = fs::path(path).stem().string();
  return rec;
}

void save_cloud_text(const std::string& path, const PointCloud& cloud) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write cloud file " + path);
  write_cloud_text(out, cloud);
}

void write_dataset(const std::string& dir, const std::vector<CloudRecord>& records) {
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt", std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
  manifest << "# file split parts\n";
  for (const CloudRecord& r : records) {
    if (r.source_id.empty() || r.source_id.find_first_of(" \t/") != std::string::npos) {
      throw std::invalid_argument("record source id '" + r.source_id + "' is not a plain file stem");
    }
    const std::string file = r.source_id + ".txt";
    save_cloud_text((fs::path(dir) / file).string(), r.cloud);
    std::string parts = "-";
    if (!r.part_set.empty()) {
      parts.clear();
      for (std::size_t i = 0; i < r.part_set.size(); ++i) parts += (i ? "," : "") + std::to_string(r.part_set[i]);
    }
    manifest << file << ' ' << (r.split.empty() ? "-" : r.split) << ' ' << parts << '\n';
  }
}

std::vector<CloudRecord> load_dataset(const std::string& dir, const std::string& split) {
  const fs::path manifest_path = fs::path(dir) / "manifest.txt";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw std::runtime_error("cannot open " + manifest_path.string());
  std::vector<CloudRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 3) throw ParseError(manifest_path.string(), lineno, 0, "expected 'file split parts'");
    if (!split.empty() && toks[1] != split) continue;
    CloudRecord rec = load_cloud_text((fs::path(dir) / toks[0]).string());
    rec.split = toks[1] == "-" ? "" : toks[1];
    if (toks[2] != "-") {
      std::stringstream ss(toks[2]);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t v = 0;
        if (!parse_size_token(item, v)) throw ParseError(manifest_path.string(), lineno, 3, "bad part id '" + item + "'");
        rec.part_set.push_back(static_cast<int>(v));
      }
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::lollipop:
      return "lollipop";
    case ShapeFamily::barbell:
      return "barbell";
    case ShapeFamily::table:
      return "table";
  }
  throw std::invalid_argument("unknown shape family");
}

ShapeFamily parse_family(const std::string& text) {
  for (ShapeFamily f : {ShapeFamily::lollipop, ShapeFamily::barbell, ShapeFamily::table}) {
    if (to_string(f) == text) return f;
  }
  throw std::invalid_argument("unknown shape family '" + text + "' (expected lollipop|barbell|table)");
}

const FamilyInfo& family_info(ShapeFamily family) {
  static const FamilyInfo infos[] = {
      {ShapeFamily::lollipop, 0, {0, 1}, {0.6, 0.4}},             // head, stick
      {ShapeFamily::barbell, 1, {2, 3, 4}, {0.35, 0.3, 0.35}},    // left ball, bar, right ball
      {ShapeFamily::table, 2, {5, 6}, {0.5, 0.5}},                // top, legs
  };
  return infos[static_cast<std::size_t>(family)];
}

std::size_t synthetic_num_parts() { return 7; }
std::size_t synthetic_num_classes() { return 3; }

std::vector<std::size_t> part_point_counts(ShapeFamily family, std::size_t points) {
  const FamilyInfo& info = family_info(family);
  const std::size_t parts = info.parts.size();
  if (points < parts) {
    throw std::invalid_argument("points per cloud (" + std::to_string(points) + ") fewer than parts (" +
                                std::to_string(parts) + ")");
  }
  // One point per part up front, the rest by largest remainder of the quotas.
  const std::size_t spare = points - parts;
  std::vector<std::size_t> counts(parts, 1);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const double exact = info.quota[p] * static_cast<double>(spare);
    const auto whole = static_cast<std::size_t>(std::floor(exact));
    counts[p] += whole;
    assigned += whole;
    remainders.push_back({exact - static_cast<double>(whole), p});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& x, const auto& y) { return x.first > y.first; });
  for (std::size_t i = 0; assigned < spare; ++i, ++assigned) counts[remainders[i % parts].second] += 1;
  return counts;
}

namespace {

double dot(const Point3& a, const Point3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Point3 sub(const Point3& a, const Point3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Point3 axpy(double s, const Point3& x, const Point3& y) { return {s * x[0] + y[0], s * x[1] + y[1], s * x[2] + y[2]}; }
double norm(const Point3& a) { return std::sqrt(dot(a, a)); }

// Orthonormal pair perpendicular to unit vector n.
std::pair<Point3, Point3> perpendicular_basis(const Point3& n) {
  const Point3 helper = std::abs(n[0]) < 0.9 ? Point3{1, 0, 0} : Point3{0, 1, 0};
  Point3 u{n[1] * helper[2] - n[2] * helper[1], n[2] * helper[0] - n[0] * helper[2],
           n[0] * helper[1] - n[1] * helper[0]};
  const double un = norm(u);
  for (double& c : u) c /= un;
  const Point3 v{n[1] * u[2] - n[2] * u[1], n[2] * u[0] - n[0] * u[2], n[0] * u[1] - n[1] * u[0]};
  return {u, v};
}

}  // namespace

double Primitive::signed_distance(const Point3& p) const {
  switch (kind) {
    case Kind::sphere:
      return norm(sub(p, a)) - radius;
    case Kind::cylinder: {
      // Exact capped-cylinder distance.
      const Point3 ba = sub(b, a), pa = sub(p, a);
      const double baba = dot(ba, ba), paba = dot(pa, ba);
      const double x = norm(axpy(-paba, ba, Point3{pa[0] * baba, pa[1] * baba, pa[2] * baba})) - radius * baba;
      const double y = std::abs(paba - baba * 0.5) - baba * 0.5;
      const double x2 = x * x, y2 = y * y * baba;
      const double d = std::max(x, y) < 0.0 ? -std::min(x2, y2) : ((x > 0.0 ? x2 : 0.0) + (y > 0.0 ? y2 : 0.0));
      return (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * std::sqrt(std::abs(d)) / baba;
    }
    case Kind::box: {
      Point3 q{};
      for (int i = 0; i < 3; ++i) q[i] = std::abs(p[i] - a[i]) - half_extent[i];
      const Point3 outside{std::max(q[0], 0.0), std::max(q[1], 0.0), std::max(q[2], 0.0)};
      return norm(outside) + std::min(std::max({q[0], q[1], q[2]}), 0.0);
    }
  }
  return 0.0;
}

double Primitive::surface_area() const {
  switch (kind) {
    case Kind::sphere:
      return 4.0 * std::numbers::pi * radius * radius;
    case Kind::cylinder:
      return 2.0 * std::numbers::pi * radius * (norm(sub(b, a)) + radius);
    case Kind::box: {
      const auto& h = half_extent;
      return 8.0 * (h[0] * h[1] + h[1] * h[2] + h[0] * h[2]);
    }
  }
  return 0.0;
}

Point3 Primitive::sample_surface(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  switch (kind) {
    case Kind::sphere: {
      std::normal_distribution<double> gauss(0.0, 1.0);
      Point3 d{gauss(rng), gauss(rng), gauss(rng)};
      double n = norm(d);
      while (n < 1e-12) {
        d = {gauss(rng), gauss(rng), gauss(rng)};
        n = norm(d);
      }
      return {a[0] + radius * d[0] / n, a[1] + radius * d[1] / n, a[2] + radius * d[2] / n};
    }
    case Kind::cylinder: {
      const Point3 axis = sub(b, a);
      const double h = norm(axis);
      const Point3 n{axis[0] / h, axis[1] / h, axis[2] / h};
      const auto [u, v] = perpendicular_basis(n);
      const double lateral = h, cap = radius / 2.0;  // area ratios after factoring out 2*pi*r
      const double pick = unit(rng) * (lateral + 2.0 * cap);
      const double theta = 2.0 * std::numbers::pi * unit(rng);
      const double c = std::cos(theta), s = std::sin(theta);
      if (pick < lateral) {
        const double t = unit(rng) * h;
        Point3 p = axpy(t, n, a);
        return axpy(radius * s, v, axpy(radius * c, u, p));
      }
      const double rr = radius * std::sqrt(unit(rng));
      const Point3 base = pick < lateral + cap ? a : b;
      return axpy(rr * s, v, axpy(rr * c, u, base));
    }
    case Kind::box: {
      const auto& h = half_extent;
      const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};  // faces normal to x, y, z
      const double pick = unit(rng) * (areas[0] + areas[1] + areas[2]);
      const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
      Point3 p = a;
      for (int i = 0; i < 3; ++i) p[i] += (2.0 * unit(rng) - 1.0) * h[i];
      p[axis] = a[axis] + (unit(rng) < 0.5 ? -h[axis] : h[axis]);
      return p;
    }
  }
  return a;
}

namespace {

SyntheticShape make_shape(ShapeFamily family, std::mt19937_64& rng) {
  auto U = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  using K = Primitive::Kind;
  const auto& parts = family_info(family).parts;
  SyntheticShape shape{family, {}};
  switch (family) {
    case ShapeFamily::lollipop: {
      const double r = U(0.3, 0.45), stick = U(0.8, 1.2), sr = U(0.05, 0.08);
      shape.primitives.push_back({K::sphere, {0, 0, stick}, {}, r, {}, parts[0]});
      shape.primitives.push_back({K::cylinder, {0, 0, 0}, {0, 0, stick}, sr, {}, parts[1]});
      break;
    }
    case ShapeFamily::barbell: {
      const double half = U(0.5, 0.7), r = U(0.25, 0.35), br = U(0.06, 0.1);
      shape.primitives.push_back({K::sphere, {-half, 0, 0}, {}, r, {}, parts[0]});
      shape.primitives.push_back({K::cylinder, {-half, 0, 0}, {half, 0, 0}, br, {}, parts[1]});
      shape.primitives.push_back({K::sphere, {half, 0, 0}, {}, r, {}, parts[2]});
      break;
    }
    case ShapeFamily::table: {
      const double hx = U(0.5, 0.7), hy = U(0.35, 0.5), ht = U(0.04, 0.06), height = U(0.6, 0.9);
      const double lr = U(0.04, 0.06), inset = lr + 0.04;
      shape.primitives.push_back({K::box, {0, 0, height}, {}, 0.0, {hx, hy, ht}, parts[0]});
      for (double sx : {-1.0, 1.0}) {
        for (double sy : {-1.0, 1.0}) {
          const double x = sx * (hx - inset), y = sy * (hy - inset);
          shape.primitives.push_back({K::cylinder, {x, y, 0}, {x, y, height - ht}, lr, {}, parts[1]});
        }
      }
      break;
    }
  }
  return shape;
}

}  // namespace

std::vector<SyntheticShape> synthetic_shapes(const SyntheticSpec& spec) {
  if (spec.families.empty()) throw std::invalid_argument("synthetic spec lists no shape families");
  std::vector<SyntheticShape> out;
  for (std::size_t i = 0; i < spec.num_clouds; ++i) {
    std::mt19937_64 rng(mix_seed(spec.seed, 2 * i));
    out.push_back(make_shape(spec.families[i % spec.families.size()], rng));
  }
  return out;
}

std::vector<CloudRecord> generate_synthetic(const SyntheticSpec& spec) {
  if (spec.noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  const auto shapes = synthetic_shapes(spec);
  std::vector<CloudRecord> out;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const SyntheticShape& shape = shapes[i];
    const FamilyInfo& info = family_info(shape.family);
    const auto counts = part_point_counts(shape.family, spec.points_per_cloud);
    std::mt19937_64 rng(mix_seed(spec.seed, 2 * i + 1));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    PointCloud cloud;
    cloud.class_id = info.class_id;
    for (std::size_t p = 0; p < info.parts.size(); ++p) {
      std::vector<const Primitive*> members;
      double total_area = 0.0;
      for (const Primitive& prim : shape.primitives) {
        if (prim.part == info.parts[p]) {
          members.push_back(&prim);
          total_area += prim.surface_area();
        }
      }
      for (std::size_t k = 0; k < counts[p]; ++k) {
        for (int attempt = 0;; ++attempt) {
          if (attempt > 100000) throw std::runtime_error("synthetic sampling failed to find an exposed surface point");
          double pick = unit(rng) * total_area;
          const Primitive* chosen = members.back();
          for (const Primitive* m : members) {
            if (pick < m->surface_area()) {
              chosen = m;
              break;
            }
            pick -= m->surface_area();
          }
          const Point3 x = chosen->sample_surface(rng);
          bool exposed = true;
          for (const Primitive& other : shape.primitives) {
            if (&other != chosen && other.signed_distance(x) <= 1e-9) {
              exposed = false;
              break;
            }
          }
          if (!exposed) continue;
          cloud.points.push_back(x);
          cloud.labels.push_back(info.parts[p]);
          break;
        }
      }
    }
    if (spec.noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise_sigma);
      for (Point3& x : cloud.points) {
        for (double& c : x) c += noise(rng);
      }
    }
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    CloudRecord rec;
    rec.cloud = cloud.permuted(order);
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", spec.id_prefix.c_str(), i);
    rec.source_id = id;
    rec.split = spec.split;
    rec.part_set = info.parts;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(shuffle_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < count; start += batch_size) {
    const std::size_t end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace yogo
