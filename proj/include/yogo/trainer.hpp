// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training and evaluation loops, part-segmentation metrics, attention export
// and kernel benchmarks.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yogo/autodiff.hpp"
#include "yogo/config.hpp"
#include "yogo/data.hpp"
#include "yogo/model.hpp"

namespace yogo {

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;       // points (segmentation) or clouds (classification)
  std::optional<double> miou;  // instance-averaged; segmentation only
  double seconds = 0.0;        // wall clock, kept out of the metrics CSV
};

struct MiouResult {
  std::vector<double> per_cloud;
  double mean = 0.0;
};

/// Mean over `part_set` of |pred & gt| / |pred | gt|; an empty union scores 1.
double cloud_iou(std::span<const int> preds, std::span<const int> labels, std::span<const int> part_set);

MiouResult compute_miou(const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& labels,
                        const std::vector<std::vector<int>>& part_sets);

struct RunConfig {
  ModelConfig model;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double lr0 = 1e-3;
  std::uint64_t seed = 0;
  std::size_t votes = 1;
  std::string out_dir;             // empty: write nothing
  std::string resume_from;         // checkpoint carrying optimizer state
  std::size_t stop_after_epochs = 0;  // 0: run to `epochs`
  std::size_t export_layer = 0;
  std::size_t export_sample = 0;

  void validate() const;
  /// Keys that define the optimisation trajectory (stored in checkpoints).
  KeyValues trajectory_key_values() const;
  static RunConfig from_key_values(const KeyValues& kv, const RunConfig& base);
  static RunConfig from_key_values(const KeyValues& kv);
};

struct TrainResult {
  YogoModel model;
  AdamState optimizer;
  std::vector<EpochMetrics> metrics;
  std::size_t epochs_completed = 0;
};

/// Rejects datasets whose labels or class ids do not fit the model's task.
void check_dataset_for_task(const ModelConfig& config, const std::vector<CloudRecord>& records);

/// Seeded, fully deterministic training. With run.out_dir set, writes
/// metrics.csv, timing.csv and checkpoint.bin there.
TrainResult train(const RunConfig& run, const std::vector<CloudRecord>& records);

/// Voting evaluation. Every cloud uses the same vote seeds, so the result does
/// not depend on record order.
EpochMetrics evaluate(const YogoModel& model, const std::vector<CloudRecord>& records, std::size_t votes,
                      std::uint64_t seed);
EpochMetrics evaluate(const std::string& checkpoint_path, const std::vector<CloudRecord>& records,
                      std::size_t votes, std::uint64_t seed);

struct AttentionExport {
  std::string token_matrix_path;  // L x L, empty for layers without self-attention
  std::string point_matrix_path;  // N x L, empty for layers without cross-attention
  std::string points_path;
};

/// Writes the post-softmax coefficient matrices of `layer` and the cloud's
/// (normalised) coordinates as CSV.
AttentionExport export_attention(const YogoModel& model, const PointCloud& cloud, std::size_t layer,
                                 const std::string& out_dir, std::uint64_t seed);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows);

struct BenchConfig {
  std::vector<std::size_t> num_points{512, 1024, 2048, 4096};
  std::vector<std::size_t> num_regions{16, 32, 64};
  std::size_t repeats = 5;
  double radius = 0.2;
  std::size_t feature_channels = 32;
  std::uint64_t seed = 0;
};

struct BenchRow {
  std::string kernel;  // fps | knn | ball_query | gather
  std::size_t num_points = 0;
  std::size_t num_regions = 0;
  std::size_t group_size = 0;
  double median_seconds = 0.0;
  std::size_t sampling_calls_per_forward = 0;
  std::size_t grouping_calls_per_forward = 0;
};

/// Group size scales as N / 16 so every kernel's work grows with N.
std::vector<BenchRow> bench_kernels(const BenchConfig& config);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace yogo
