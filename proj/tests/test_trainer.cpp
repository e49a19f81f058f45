// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "yogo/trainer.hpp"

using namespace yogo;
using namespace yogo::testing;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "yogo-test-trainer" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::string* header = nullptr) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  if (header) *header = line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

ModelConfig small_model() {
  ModelConfig c;
  c.num_layers = 2;
  c.channels = {8, 8};
  c.token_channels = 8;
  c.num_regions = 4;
  c.group_size = 8;
  c.num_parts = synthetic_num_parts();
  c.head_hidden = 8;
  c.seed = 2;
  return c;
}

std::vector<CloudRecord> small_data(std::size_t clouds, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.num_clouds = clouds;
  spec.points_per_cloud = 48;
  spec.seed = seed;
  return generate_synthetic(spec);
}

}  // namespace

TEST_CASE("cloud IoU hand examples") {
  const std::vector<int> gt{0, 0, 1, 1};
  CHECK(cloud_iou(gt, gt, {}) == 1.0);
  // Part 0: 1/2, part 1: 2/3.
  CHECK(cloud_iou(std::vector<int>{0, 1, 1, 1}, gt, {}) == Approx((0.5 + 2.0 / 3.0) / 2.0));
  // A part absent from both prediction and labels counts as 1.
  CHECK(cloud_iou(gt, gt, std::vector<int>{0, 1, 2}) == 1.0);
  // A predicted part outside the labels lowers the present parts only.
  CHECK(cloud_iou(std::vector<int>{0, 5, 1, 1}, gt, {}) == Approx((0.5 + 1.0) / 2.0));
  CHECK_THROWS_AS(cloud_iou(gt, gt, std::vector<int>{0}), std::invalid_argument);
  CHECK_THROWS_AS(cloud_iou(std::vector<int>{0}, gt, {}), std::invalid_argument);

  const MiouResult m = compute_miou({{0, 1, 1, 1}, gt}, {gt, gt}, {{}, {}});
  CHECK(m.per_cloud.size() == 2);
  CHECK(m.mean == Approx(((0.5 + 2.0 / 3.0) / 2.0 + 1.0) / 2.0));
}

TEST_CASE("cloud IoU agrees with the set oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> np(1, 6), nn(1, 40);
    const int parts = np(rng);
    const std::size_t n = static_cast<std::size_t>(nn(rng));
    std::uniform_int_distribution<int> lab(0, parts - 1), pred(0, parts + 1);
    std::vector<int> labels(n), preds(n), part_set;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = lab(rng);
      preds[i] = pred(rng);
    }
    for (int p = 0; p < parts; ++p) part_set.push_back(p);
    CHECK(cloud_iou(preds, labels, part_set) == Approx(oracle_cloud_iou(preds, labels, part_set)).epsilon(1e-14));
  }
}

TEST_CASE("run config") {
  RunConfig r;
  r.model = small_model();
  r.epochs = 3;
  r.lr0 = 0.1 + 0.2;
  r.seed = 99;
  KeyValues kv = r.trajectory_key_values();
  const KeyValues model_kv = r.model.to_key_values();
  kv.insert(model_kv.begin(), model_kv.end());
  const RunConfig back = RunConfig::from_key_values(kv);
  CHECK(back.epochs == 3);
  CHECK(back.lr0 == r.lr0);
  CHECK(back.seed == 99);
  CHECK(back.model == r.model);

  auto bad = [](auto edit) {
    RunConfig c;
    edit(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  bad([](RunConfig& c) { c.epochs = 0; });
  bad([](RunConfig& c) { c.batch_size = 0; });
  bad([](RunConfig& c) { c.lr0 = 0.0; });
  bad([](RunConfig& c) { c.votes = 0; });
}

TEST_CASE("one-epoch training writes its artifacts") {
  const fs::path dir = fresh_dir("smoke");
  RunConfig run;
  run.model = small_model();
  run.epochs = 1;
  run.batch_size = 2;
  run.seed = 4;
  run.out_dir = dir.string();
  const TrainResult r = train(run, small_data(4, 1));
  CHECK(r.epochs_completed == 1);
  REQUIRE(r.metrics.size() == 1);
  CHECK(std::isfinite(r.metrics[0].loss));
  CHECK(r.metrics[0].miou.has_value());

  std::string header;
  const auto rows = read_csv(dir / "metrics.csv", &header);
  CHECK(header == "epoch,lr,loss,accuracy,miou");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0][0] == 1.0);
  CHECK(rows[0][2] == r.metrics[0].loss);
  CHECK(fs::exists(dir / "timing.csv"));

  const Checkpoint ck = load_checkpoint((dir / "checkpoint.bin").string());
  CHECK(ck.model == r.model);
  CHECK(ck.metadata.at("epochs_completed") == "1");
  CHECK(ck.optimizer->step == 2);
}

TEST_CASE("datasets must fit the task") {
  auto data = small_data(2, 2);
  ModelConfig seg = small_model();
  seg.num_parts = 2;
  CHECK_THROWS_AS(check_dataset_for_task(seg, data), std::invalid_argument);
  ModelConfig cls = small_model();
  cls.task = Task::classification;
  cls.num_classes = synthetic_num_classes();
  CHECK_NOTHROW(check_dataset_for_task(cls, data));
  data[1].cloud.class_id.reset();
  CHECK_THROWS_AS(check_dataset_for_task(cls, data), std::invalid_argument);
  CHECK_THROWS_AS(check_dataset_for_task(cls, {}), std::invalid_argument);
}

TEST_CASE("evaluation") {
  const YogoModel model(small_model());
  auto data = small_data(5, 3);

  SUBCASE("a single vote matches the plain forward") {
    const EpochMetrics m = evaluate(model, data, 1, 7);
    std::size_t correct = 0, total = 0;
    double iou = 0.0;
    for (const CloudRecord& rec : data) {
      const PointCloud cloud = normalize(rec.cloud);
      Tape tape(false);
      ParameterBinding bind(tape, model.parameters());
      const Tensor logits = forward_segmentation(model, bind, cloud, 7).value();
      std::vector<int> preds;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.extent(1); ++c) {
          if (logits.at(i, c) > logits.at(i, best)) best = c;
        }
        preds.push_back(int(best));
        correct += preds.back() == cloud.labels[i];
        ++total;
      }
      iou += oracle_cloud_iou(preds, cloud.labels, rec.part_set);
    }
    CHECK(m.accuracy == Approx(double(correct) / double(total)).epsilon(1e-15));
    CHECK(*m.miou == Approx(iou / 5.0).epsilon(1e-12));
  }

  SUBCASE("record order does not matter") {
    const EpochMetrics a = evaluate(model, data, 3, 7);
    std::reverse(data.begin(), data.end());
    const EpochMetrics b = evaluate(model, data, 3, 7);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.loss == b.loss);
    CHECK(*a.miou == *b.miou);
  }

  SUBCASE("evaluating from a checkpoint leaves it unchanged") {
    const fs::path path = fresh_dir("eval") / "model.bin";
    save_checkpoint(path.string(), model);
    const std::string before = slurp(path);
    const EpochMetrics m = evaluate(path.string(), data, 2, 7);
    CHECK(slurp(path) == before);
    CHECK(m.accuracy == evaluate(model, data, 2, 7).accuracy);
  }
}

TEST_CASE("attention export") {
  const YogoModel model(small_model());
  const PointCloud cloud = small_data(1, 4)[0].cloud;
  const fs::path dir = fresh_dir("export");
  const AttentionExport e = export_attention(model, cloud, 1, dir.string(), 5);

  std::string header;
  const auto tp = read_csv(e.point_matrix_path, &header);
  CHECK(header == "t0,t1,t2,t3");
  REQUIRE(tp.size() == cloud.size());
  for (const auto& row : tp) {
    REQUIRE(row.size() == 4);
    double s = 0.0;
    for (double v : row) s += v;
    CHECK(s == Approx(1.0).epsilon(1e-12));
  }
  const auto tt = read_csv(e.token_matrix_path);
  CHECK(tt.size() == 4);
  const auto pts = read_csv(e.points_path, &header);
  CHECK(header == "x,y,z,label");
  CHECK(pts.size() == cloud.size());

  const std::string first = slurp(e.point_matrix_path);
  export_attention(model, cloud, 1, dir.string(), 5);
  CHECK(slurp(e.point_matrix_path) == first);
  CHECK_THROWS_AS(export_attention(model, cloud, 2, dir.string(), 5), std::out_of_range);

  ModelConfig no_ca = small_model();
  no_ca.variant = RimVariant::no_ca_add_tokens;
  const AttentionExport n = export_attention(YogoModel(no_ca), cloud, 0, (dir / "noca").string(), 5);
  CHECK(n.point_matrix_path.empty());
  CHECK_FALSE(n.token_matrix_path.empty());
}

TEST_CASE("kernel benchmark rows") {
  BenchConfig cfg;
  cfg.num_points = {64, 128};
  cfg.num_regions = {4, 8};
  cfg.repeats = 1;
  const auto rows = bench_kernels(cfg);
  CHECK(rows.size() == 2 * 2 * 4);
  for (const BenchRow& r : rows) {
    CHECK(r.group_size == std::max<std::size_t>(1, r.num_points / 16));
    CHECK(r.median_seconds >= 0.0);
    CHECK(r.sampling_calls_per_forward == 1);
    CHECK(r.grouping_calls_per_forward == 1);
  }
  const fs::path dir = fresh_dir("bench");
  write_bench_csv((dir / "bench.csv").string(), rows);
  std::ifstream in(dir / "bench.csv");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == rows.size() + 1);
  cfg.num_regions = {100};
  CHECK_THROWS_AS(bench_kernels(cfg), std::invalid_argument);
}
