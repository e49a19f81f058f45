// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <stdexcept>

namespace yogo {

namespace fs = std::filesystem;

double cloud_iou(std::span<const int> preds, std::span<const int> labels, std::span<const int> part_set) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("cloud_iou: " + std::to_string(preds.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<int> parts(part_set.begin(), part_set.end());
  if (parts.empty()) {
    parts.assign(labels.begin(), labels.end());
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
  }
  if (parts.empty()) throw std::invalid_argument("cloud_iou: empty cloud");
  for (int l : labels) {
    if (std::find(parts.begin(), parts.end(), l) == parts.end()) {
      throw std::invalid_argument("cloud_iou: label " + std::to_string(l) + " outside the cloud's part set");
    }
  }
  double total = 0.0;
  for (int p : parts) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool in_pred = preds[i] == p, in_gt = labels[i] == p;
      inter += in_pred && in_gt;
      uni += in_pred || in_gt;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(parts.size());
}

MiouResult compute_miou(const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& labels,
                        const std::vector<std::vector<int>>& part_sets) {
  if (preds.size() != labels.size() || part_sets.size() != labels.size()) {
    throw std::invalid_argument("compute_miou: prediction, label and part-set counts differ");
  }
  MiouResult r;
  for (std::size_t c = 0; c < labels.size(); ++c) r.per_cloud.push_back(cloud_iou(preds[c], labels[c], part_sets[c]));
  if (!r.per_cloud.empty()) {
    double s = 0.0;
    for (double v : r.per_cloud) s += v;
    r.mean = s / static_cast<double>(r.per_cloud.size());
  }
  return r;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  model.validate();
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be > 0");
  if (votes < 1) throw std::invalid_argument("votes must be >= 1");
}

KeyValues RunConfig::trajectory_key_values() const {
  return {{"epochs", std::to_string(epochs)},
          {"batch_size", std::to_string(batch_size)},
          {"lr0", format_double(lr0)},
          {"seed", std::to_string(seed)}};
}

RunConfig RunConfig::from_key_values(const KeyValues& kv, const RunConfig& base) {
  RunConfig r = base;
  r.model = ModelConfig::from_key_values(kv, base.model);
  r.epochs = kv_size(kv, "epochs", base.epochs);
  r.batch_size = kv_size(kv, "batch_size", base.batch_size);
  r.lr0 = kv_double(kv, "lr0", base.lr0);
  r.seed = kv_u64(kv, "seed", base.seed);
  r.votes = kv_size(kv, "votes", base.votes);
  r.out_dir = kv_string(kv, "out_dir", base.out_dir);
  r.export_layer = kv_size(kv, "export_layer", base.export_layer);
  r.export_sample = kv_size(kv, "export_sample", base.export_sample);
  return r;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, RunConfig{}); }

void check_dataset_for_task(const ModelConfig& config, const std::vector<CloudRecord>& records) {
  if (records.empty()) throw std::invalid_argument("dataset is empty");
  for (const CloudRecord& r : records) {
    r.cloud.validate();
    if (r.cloud.feature_dim != config.extra_features) {
      throw std::invalid_argument("record " + r.source_id + " has " + std::to_string(r.cloud.feature_dim) +
                                  " extra features, model expects " + std::to_string(config.extra_features));
    }
    if (config.task == Task::segmentation) {
      if (!r.cloud.has_labels()) throw std::invalid_argument("record " + r.source_id + " has no per-point labels");
      for (int l : r.cloud.labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= config.num_parts) {
          throw std::invalid_argument("record " + r.source_id + " label " + std::to_string(l) + " outside [0, " +
                                      std::to_string(config.num_parts) + ")");
        }
      }
    } else {
      if (!r.cloud.class_id || *r.cloud.class_id < 0 ||
          static_cast<std::size_t>(*r.cloud.class_id) >= config.num_classes) {
        throw std::invalid_argument("record " + r.source_id + " lacks a class id in [0, " +
                                    std::to_string(config.num_classes) + ")");
      }
    }
  }
}

namespace {

using Clock = std::chrono::steady_clock;

int argmax_row(const Tensor& t, std::size_t row, std::size_t width) {
  const double* r = &t.data()[row * width];
  return static_cast<int>(std::max_element(r, r + width) - r);
}

std::vector<PointCloud> normalized_clouds(const std::vector<CloudRecord>& records) {
  std::vector<PointCloud> out;
  out.reserve(records.size());
  for (const CloudRecord& r : records) out.push_back(normalize(r.cloud));
  return out;
}

// Sum in ascending order so the total does not depend on input order.
double order_free_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t epoch, std::size_t index) {
  return mix_seed(mix_seed(seed, 0x5eedULL + epoch), index);
}

}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,lr,loss,accuracy,miou\n";
  for (const EpochMetrics& m : rows) {
    out << m.epoch << ',' << format_double(m.lr) << ',' << format_double(m.loss) << ','
        << format_double(m.accuracy) << ',' << (m.miou ? format_double(*m.miou) : "") << '\n';
  }
}

TrainResult train(const RunConfig& run, const std::vector<CloudRecord>& records) {
  run.validate();

  std::optional<Checkpoint> resumed;
  if (!run.resume_from.empty()) {
    resumed = load_checkpoint(run.resume_from);
    if (!resumed->optimizer) throw std::invalid_argument("checkpoint " + run.resume_from + " has no optimizer state");
    if (!(resumed->model.config() == run.model)) {
      throw std::invalid_argument("resume checkpoint model config differs from the run config");
    }
    for (const auto& [k, v] : run.trajectory_key_values()) {
      if (kv_string(resumed->metadata, "run." + k, "") != v) {
        throw std::invalid_argument("resume checkpoint was trained with a different " + k);
      }
    }
  }
  check_dataset_for_task(run.model, records);

  TrainResult result{resumed ? resumed->model : YogoModel(run.model), AdamState{}, {}, 0};
  YogoModel& model = result.model;
  result.optimizer = resumed ? *resumed->optimizer : AdamState::zeros_like(model.parameters());
  result.epochs_completed = resumed ? kv_size(resumed->metadata, "epochs_completed", 0) : 0;

  const std::vector<PointCloud> clouds = normalized_clouds(records);
  const std::size_t n = records.size();
  const std::size_t batches_per_epoch = (n + run.batch_size - 1) / run.batch_size;
  const auto total_steps = static_cast<std::int64_t>(run.epochs * batches_per_epoch);
  const std::size_t last_epoch = run.stop_after_epochs ? std::min(run.epochs, run.stop_after_epochs) : run.epochs;
  const bool segmentation = run.model.task == Task::segmentation;
  const std::size_t out_dim = run.model.output_dim();

  std::vector<Tensor> grads;
  for (const Parameter& p : model.parameters()) grads.emplace_back(p.value.shape(), 0.0);

  for (std::size_t epoch = result.epochs_completed; epoch < last_epoch; ++epoch) {
    const auto t0 = Clock::now();
    EpochMetrics m;
    m.epoch = epoch + 1;
    std::vector<double> losses;
    std::size_t correct = 0, total = 0;
    std::vector<double> ious;

    const auto batches = make_batches(n, run.batch_size, mix_seed(run.seed, epoch));
    for (std::size_t b = 0; b < batches.size(); ++b) {
      for (Tensor& g : grads) std::fill(g.data().begin(), g.data().end(), 0.0);
      for (std::size_t idx : batches[b]) {
        const PointCloud& cloud = clouds[idx];
        Tape tape;
        ParameterBinding bind(tape, model.parameters());
        Var logits = forward(model, bind, cloud, sample_seed(run.seed, epoch, idx)).logits;
        Var loss = segmentation ? loss_segmentation(logits, cloud.labels)
                                : loss_classification(logits, static_cast<std::size_t>(*cloud.class_id));
        tape.backward(loss);
        tape.accumulate_parameter_grads(grads);
        losses.push_back(loss.value().item());

        const Tensor& z = logits.value();
        if (segmentation) {
          std::vector<int> preds(cloud.size());
          for (std::size_t i = 0; i < cloud.size(); ++i) {
            preds[i] = argmax_row(z, i, out_dim);
            correct += preds[i] == cloud.labels[i];
          }
          total += cloud.size();
          ious.push_back(cloud_iou(preds, cloud.labels, records[idx].part_set));
        } else {
          correct += argmax_row(z, 0, out_dim) == *cloud.class_id;
          total += 1;
        }
      }
      const double inv = 1.0 / static_cast<double>(batches[b].size());
      for (Tensor& g : grads) {
        for (double& v : g.data()) v *= inv;
      }
      const auto step = static_cast<std::int64_t>(epoch * batches_per_epoch + b);
      m.lr = cosine_annealing_lr(step, total_steps, run.lr0);
      adam_step(model.parameters(), grads, result.optimizer, m.lr);
    }

    m.loss = order_free_mean(losses);
    m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    if (segmentation) m.miou = order_free_mean(ious);
    m.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    result.metrics.push_back(m);
    result.epochs_completed = epoch + 1;
  }

  if (!run.out_dir.empty()) {
    fs::create_directories(run.out_dir);
    write_metrics_csv((fs::path(run.out_dir) / "metrics.csv").string(), result.metrics);
    std::ofstream timing(fs::path(run.out_dir) / "timing.csv", std::ios::trunc);
    timing << "epoch,seconds\n";
    for (const EpochMetrics& m : result.metrics) timing << m.epoch << ',' << m.seconds << '\n';
    KeyValues meta;
    for (const auto& [k, v] : run.trajectory_key_values()) meta["run." + k] = v;
    meta["epochs_completed"] = std::to_string(result.epochs_completed);
    save_checkpoint((fs::path(run.out_dir) / "checkpoint.bin").string(), model, &result.optimizer, meta);
  }
  return result;
}

// ---------------------------------------------------------------------------

EpochMetrics evaluate(const YogoModel& model, const std::vector<CloudRecord>& records, std::size_t votes,
                      std::uint64_t seed) {
  const ModelConfig& cfg = model.config();
  check_dataset_for_task(cfg, records);
  const auto t0 = Clock::now();
  const bool segmentation = cfg.task == Task::segmentation;
  const std::size_t out_dim = cfg.output_dim();

  std::vector<double> losses, ious;
  std::size_t correct = 0, total = 0;
  for (const CloudRecord& rec : records) {
    const PointCloud cloud = normalize(rec.cloud);
    const Tensor probs = predict_with_voting(model, cloud, votes, seed);
    if (segmentation) {
      std::vector<int> preds(cloud.size());
      double nll = 0.0;
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        preds[i] = argmax_row(probs, i, out_dim);
        correct += preds[i] == cloud.labels[i];
        nll -= std::log(std::max(probs.at(i, static_cast<std::size_t>(cloud.labels[i])), 1e-300));
      }
      total += cloud.size();
      losses.push_back(nll / static_cast<double>(cloud.size()));
      ious.push_back(cloud_iou(preds, cloud.labels, rec.part_set));
    } else {
      const auto label = static_cast<std::size_t>(*cloud.class_id);
      correct += argmax_row(probs, 0, out_dim) == *cloud.class_id;
      total += 1;
      losses.push_back(-std::log(std::max(probs[label], 1e-300)));
    }
  }
  EpochMetrics m;
  m.loss = order_free_mean(losses);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  if (segmentation) m.miou = order_free_mean(ious);
  m.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return m;
}

EpochMetrics evaluate(const std::string& checkpoint_path, const std::vector<CloudRecord>& records,
                      std::size_t votes, std::uint64_t seed) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  return evaluate(ck.model, records, votes, seed);
}

// ---------------------------------------------------------------------------

namespace {

void write_matrix_csv(const std::string& path, const Tensor& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  for (std::size_t j = 0; j < cols; ++j) out << (j ? "," : "") << 't' << j;
  out << '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out << (j ? "," : "") << format_double(m.at(i, j));
    out << '\n';
  }
}

}  // namespace

AttentionExport export_attention(const YogoModel& model, const PointCloud& cloud, std::size_t layer,
                                 const std::string& out_dir, std::uint64_t seed) {
  if (layer >= model.layers().size()) {
    throw std::out_of_range("layer " + std::to_string(layer) + " out of range (model has " +
                            std::to_string(model.layers().size()) + " layers)");
  }
  const PointCloud norm = normalize(cloud);
  Tape tape(false);
  ParameterBinding bind(tape, model.parameters());
  const ForwardOutput fwd = forward(model, bind, norm, seed);
  const RimOutput& out = fwd.layers[layer];

  fs::create_directories(out_dir);
  AttentionExport paths;
  const std::string stem = "layer" + std::to_string(layer);
  if (out.token_coefficients) {
    paths.token_matrix_path = (fs::path(out_dir) / ("attention_tt_" + stem + ".csv")).string();
    write_matrix_csv(paths.token_matrix_path, out.token_coefficients->value());
  }
  if (out.point_coefficients) {
    paths.point_matrix_path = (fs::path(out_dir) / ("attention_tp_" + stem + ".csv")).string();
    write_matrix_csv(paths.point_matrix_path, out.point_coefficients->value());
  }
  paths.points_path = (fs::path(out_dir) / "points.csv").string();
  std::ofstream pts(paths.points_path, std::ios::trunc);
  if (!pts) throw std::runtime_error("cannot write " + paths.points_path);
  pts << "x,y,z" << (norm.has_labels() ? ",label" : "") << '\n';
  for (std::size_t i = 0; i < norm.size(); ++i) {
    pts << format_double(norm.points[i][0]) << ',' << format_double(norm.points[i][1]) << ','
        << format_double(norm.points[i][2]);
    if (norm.has_labels()) pts << ',' << norm.labels[i];
    pts << '\n';
  }
  return paths;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
double median_seconds_per_call(Fn&& fn, std::size_t repeats) {
  // Calibrate so one timed run lasts about 2 ms.
  const auto c0 = Clock::now();
  fn();
  const double once = std::chrono::duration<double>(Clock::now() - c0).count();
  const std::size_t reps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(2e-3 / std::max(once, 1e-9))));
  std::vector<double> samples;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    for (std::size_t i = 0; i < reps; ++i) fn();
    samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(reps));
  }
  std::sort(samples.begin(), samples.end());
  return samples[samples.size() / 2];
}

}  // namespace

std::vector<BenchRow> bench_kernels(const BenchConfig& config) {
  if (config.repeats < 1) throw std::invalid_argument("bench repeats must be >= 1");
  std::vector<BenchRow> rows;
  std::vector<std::size_t> ns = config.num_points;
  std::sort(ns.begin(), ns.end());
  for (std::size_t n : ns) {
    std::mt19937_64 rng(mix_seed(config.seed, n));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointCloud cloud;
    for (std::size_t i = 0; i < n; ++i) cloud.points.push_back({unit(rng), unit(rng), unit(rng)});
    Tensor feats({n, config.feature_channels});
    for (double& v : feats.data()) v = unit(rng);
    const std::size_t k = std::max<std::size_t>(1, n / 16);

    for (std::size_t l : config.num_regions) {
      if (l > n) throw std::invalid_argument("bench: L exceeds N");
      // Group-once check on a small model at this size.
      ModelConfig mc;
      mc.num_layers = 2;
      mc.channels = {16, 16};
      mc.token_channels = 16;
      mc.num_regions = l;
      mc.group_size = k;
      mc.num_parts = 4;
      mc.head_hidden = 16;
      const YogoModel probe(mc);
      reset_kernel_counters();
      {
        Tape tape(false);
        ParameterBinding bind(tape, probe.parameters());
        forward(probe, bind, cloud, config.seed);
      }
      const KernelCounters calls = kernel_counters();

      const auto centers = farthest_point_sampling(cloud, l, config.seed);
      SubRegionIndex sub;
      sub.centers = centers;
      sub.group_size = k;
      sub.members = knn_group(cloud, centers, k);

      auto add_row = [&](const std::string& kernel, double secs) {
        rows.push_back({kernel, n, l, k, secs, calls.sampling_calls, calls.grouping_calls});
      };
      add_row("fps", median_seconds_per_call([&] { farthest_point_sampling(cloud, l, config.seed); }, config.repeats));
      add_row("knn", median_seconds_per_call([&] { knn_group(cloud, centers, k); }, config.repeats));
      add_row("ball_query",
              median_seconds_per_call([&] { ball_query_group(cloud, centers, k, config.radius); }, config.repeats));
      add_row("gather", median_seconds_per_call(
                            [&] {
                              Tape tape(false);
                              gather(tape.constant(feats), sub);
                            },
                            config.repeats));
    }
  }
  reset_kernel_counters();
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "kernel,num_points,num_regions,group_size,median_seconds,sampling_calls_per_forward,"
         "grouping_calls_per_forward\n";
  for (const BenchRow& r : rows) {
    out << r.kernel << ',' << r.num_points << ',' << r.num_regions << ',' << r.group_size << ','
        << format_double(r.median_seconds) << ',' << r.sampling_calls_per_forward << ','
        << r.grouping_calls_per_forward << '\n';
  }
}

}  // namespace yogo
