// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// yogo: train, evaluate and inspect point-cloud models from the command line.
// Failures print a single line `error<TAB>kind<TAB>message` and exit nonzero.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "yogo/config.hpp"
#include "yogo/data.hpp"
#include "yogo/model.hpp"
#include "yogo/trainer.hpp"

namespace fs = std::filesystem;
using namespace yogo;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by every subcommand that builds a RunConfig.
struct RunFlags {
  std::string config_file;
  std::optional<std::string> seed, out_dir;
  std::optional<std::string> regions, group_size, radius, sampling, grouping, pooling, variant, votes, lr0, epochs,
      batch, channels, token_channels, task, num_parts, num_classes, head_hidden, model_seed, export_layer,
      export_sample;
  bool scaled_attention = false;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "key=value configuration file");
    app->add_option("--seed", seed, "master seed");
    app->add_option("--out-dir", out_dir, "output directory");
    app->add_option("-L,--regions", regions, "number of sub-regions");
    app->add_option("-K,--group-size", group_size, "points per sub-region");
    app->add_option("--radius", radius, "ball-query radius");
    app->add_option("--sampling", sampling, "fps | random");
    app->add_option("--grouping", grouping, "knn | ball");
    app->add_option("--pooling", pooling, "max | avg");
    app->add_option("--variant", variant,
                    "full | no_sa_mlp | no_ca_global_concat | no_ca_add_tokens | no_ca_concat_tokens");
    app->add_flag("--scaled-attention", scaled_attention, "scale attention logits by 1/sqrt(d)");
    app->add_option("--votes", votes, "forward passes averaged per cloud at evaluation");
    app->add_option("--lr0", lr0, "initial learning rate");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--batch", batch, "batch size");
    app->add_option("--channels", channels, "comma-separated per-layer channels");
    app->add_option("--token-channels", token_channels, "token channels");
    app->add_option("--task", task, "segmentation | classification");
    app->add_option("--num-parts", num_parts, "part labels (segmentation)");
    app->add_option("--num-classes", num_classes, "object classes (classification)");
    app->add_option("--head-hidden", head_hidden, "hidden width of the output head");
    app->add_option("--model-seed", model_seed, "weight initialisation seed (defaults to --seed)");
  }

  KeyValues merged() const {
    KeyValues kv = config_file.empty() ? KeyValues{} : load_key_values(config_file);
    auto put = [&](const char* key, const std::optional<std::string>& v) {
      if (v) kv[key] = *v;
    };
    put("seed", seed);
    put("out_dir", out_dir);
    put("regions", regions);
    put("group_size", group_size);
    put("radius", radius);
    put("sampling", sampling);
    put("grouping", grouping);
    put("pooling", pooling);
    put("variant", variant);
    put("votes", votes);
    put("lr0", lr0);
    put("epochs", epochs);
    put("batch_size", batch);
    put("channels", channels);
    put("token_channels", token_channels);
    put("task", task);
    put("num_parts", num_parts);
    put("num_classes", num_classes);
    put("head_hidden", head_hidden);
    put("model_seed", model_seed);
    put("export_layer", export_layer);
    put("export_sample", export_sample);
    if (scaled_attention) kv["scaled_attention"] = "true";
    if (kv.count("seed") && !kv.count("model_seed")) kv["model_seed"] = kv["seed"];
    return kv;
  }

  RunConfig run_config() const {
    RunConfig run = RunConfig::from_key_values(merged());
    run.validate();
    return run;
  }
};

std::string require_out_dir(const KeyValues& kv) {
  const std::string dir = kv_string(kv, "out_dir", "");
  if (dir.empty()) throw UsageError("--out-dir is required");
  return dir;
}

void print_metrics(const std::string& prefix, const EpochMetrics& m) {
  std::printf("%sloss=%.6f accuracy=%.6f", prefix.c_str(), m.loss, m.accuracy);
  if (m.miou) std::printf(" miou=%.6f", *m.miou);
  std::printf(" seconds=%.3f\n", m.seconds);
}

int run_train(const RunFlags& flags, const std::string& data_dir, const std::string& split,
              const std::string& resume, std::size_t stop_after) {
  RunConfig run = flags.run_config();
  if (run.out_dir.empty()) throw UsageError("--out-dir is required");
  run.resume_from = resume;
  run.stop_after_epochs = stop_after;
  const auto records = load_dataset(data_dir, split);
  const TrainResult r = train(run, records);
  for (const EpochMetrics& m : r.metrics) print_metrics("epoch=" + std::to_string(m.epoch) + " ", m);
  std::printf("checkpoint=%s\n", (fs::path(run.out_dir) / "checkpoint.bin").string().c_str());
  return 0;
}

int run_eval(const RunFlags& flags, const std::string& checkpoint, const std::string& data_dir,
             const std::string& split) {
  const KeyValues kv = flags.merged();
  const std::size_t votes = kv_size(kv, "votes", 1);
  const std::uint64_t seed = kv_u64(kv, "seed", 0);
  const auto records = load_dataset(data_dir, split);
  const EpochMetrics m = evaluate(checkpoint, records, votes, seed);
  print_metrics("", m);
  if (const std::string dir = kv_string(kv, "out_dir", ""); !dir.empty()) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "eval.csv", std::ios::trunc);
    out << "loss,accuracy,miou\n"
        << format_double(m.loss) << ',' << format_double(m.accuracy) << ','
        << (m.miou ? format_double(*m.miou) : "") << '\n';
  }
  return 0;
}

int run_infer(const RunFlags& flags, const std::string& checkpoint, const std::string& input,
              const std::string& output) {
  const KeyValues kv = flags.merged();
  const Checkpoint ck = load_checkpoint(checkpoint);
  const CloudRecord rec = load_cloud_text(input);
  const PointCloud cloud = normalize(rec.cloud);
  const Tensor probs = predict_with_voting(ck.model, cloud, kv_size(kv, "votes", 1), kv_u64(kv, "seed", 0));
  const std::size_t width = ck.model.config().output_dim();
  const std::size_t rows = probs.rank() == 1 ? 1 : probs.extent(0);

  std::ofstream file;
  if (!output.empty()) {
    file.open(output, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + output);
  }
  std::ostream& out = output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < width; ++c) {
      if (probs[i * width + c] > probs[i * width + best]) best = c;
    }
    out << best << '\n';
  }
  return 0;
}

int run_export(const RunFlags& flags, const std::string& checkpoint, const std::string& input,
               const std::string& data_dir, const std::string& split) {
  const KeyValues kv = flags.merged();
  const RunConfig run = RunConfig::from_key_values(kv);
  const std::string out_dir = require_out_dir(kv);
  const Checkpoint ck = load_checkpoint(checkpoint);
  PointCloud cloud;
  if (!input.empty()) {
    cloud = load_cloud_text(input).cloud;
  } else if (!data_dir.empty()) {
    const auto records = load_dataset(data_dir, split);
    if (run.export_sample >= records.size()) {
      throw std::out_of_range("export sample " + std::to_string(run.export_sample) + " out of range (dataset has " +
                              std::to_string(records.size()) + " clouds)");
    }
    cloud = records[run.export_sample].cloud;
  } else {
    throw UsageError("--input or --data is required");
  }
  const AttentionExport paths = export_attention(ck.model, cloud, run.export_layer, out_dir, run.seed);
  if (!paths.token_matrix_path.empty()) std::printf("token_matrix=%s\n", paths.token_matrix_path.c_str());
  if (!paths.point_matrix_path.empty()) std::printf("point_matrix=%s\n", paths.point_matrix_path.c_str());
  std::printf("points=%s\n", paths.points_path.c_str());
  return 0;
}

int run_bench(const RunFlags& flags, BenchConfig bench) {
  const KeyValues kv = flags.merged();
  bench.seed = kv_u64(kv, "seed", 0);
  bench.radius = kv_double(kv, "radius", bench.radius);
  const std::string out_dir = require_out_dir(kv);
  fs::create_directories(out_dir);
  const auto rows = bench_kernels(bench);
  const std::string path = (fs::path(out_dir) / "bench_kernels.csv").string();
  write_bench_csv(path, rows);
  std::printf("report=%s rows=%zu\n", path.c_str(), rows.size());
  return 0;
}

int run_gen(const RunFlags& flags, std::size_t train_count, std::size_t test_count, std::size_t points,
            double noise) {
  const KeyValues kv = flags.merged();
  const std::string out_dir = require_out_dir(kv);
  const std::uint64_t seed = kv_u64(kv, "seed", 0);
  SyntheticSpec spec;
  spec.points_per_cloud = points;
  spec.noise_sigma = noise;

  spec.num_clouds = train_count;
  spec.seed = mix_seed(seed, 1);
  spec.split = "train";
  spec.id_prefix = "train";
  auto records = generate_synthetic(spec);

  spec.num_clouds = test_count;
  spec.seed = mix_seed(seed, 2);
  spec.split = "test";
  spec.id_prefix = "test";
  for (auto& r : generate_synthetic(spec)) records.push_back(std::move(r));

  write_dataset(out_dir, records);
  std::printf("clouds=%zu parts=%zu classes=%zu manifest=%s\n", records.size(), synthetic_num_parts(),
              synthetic_num_classes(), (fs::path(out_dir) / "manifest.txt").string().c_str());
  return 0;
}

int fail(const char* kind, const std::string& message, int code) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\t') c = ' ';
  }
  std::fprintf(stderr, "error\t%s\t%s\n", kind, flat.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-cloud part segmentation and classification"};
  app.require_subcommand(1);

  RunFlags flags;
  std::string data_dir, split, checkpoint, input, output, resume;
  std::size_t stop_after = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset directory");
  flags.add_to(train_cmd);
  std::string train_split = "train";
  train_cmd->add_option("--data", data_dir, "dataset directory")->required();
  train_cmd->add_option("--split", train_split, "manifest split to train on");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");
  train_cmd->add_option("--stop-after", stop_after, "stop after this many epochs (the schedule still spans --epochs)");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  flags.add_to(eval_cmd);
  std::string eval_split = "test";
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", eval_split, "manifest split to evaluate");

  auto* infer_cmd = app.add_subcommand("infer", "predict labels for one cloud");
  flags.add_to(infer_cmd);
  infer_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  infer_cmd->add_option("--input", input, "cloud text file")->required();
  infer_cmd->add_option("--output", output, "prediction file (default: stdout)");

  auto* export_cmd = app.add_subcommand("export-attention", "write attention coefficient matrices as CSV");
  flags.add_to(export_cmd);
  std::string export_split = "test";
  export_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  export_cmd->add_option("--input", input, "cloud text file");
  export_cmd->add_option("--data", data_dir, "dataset directory");
  export_cmd->add_option("--split", export_split, "manifest split");
  export_cmd->add_option("--layer", flags.export_layer, "layer index");
  export_cmd->add_option("--sample", flags.export_sample, "cloud index within the split");

  auto* bench_cmd = app.add_subcommand("bench-kernels", "time sampling, grouping and gather kernels");
  flags.add_to(bench_cmd);
  BenchConfig bench;
  bench_cmd->add_option("--sizes", bench.num_points, "point counts")->delimiter(',');
  bench_cmd->add_option("--region-counts", bench.num_regions, "region counts")->delimiter(',');
  bench_cmd->add_option("--repeats", bench.repeats, "timed repetitions per measurement");

  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic part-segmentation dataset");
  flags.add_to(gen_cmd);
  std::size_t train_count = 200, test_count = 50, points = 256;
  double noise = 0.02;
  gen_cmd->add_option("--train-clouds", train_count, "training clouds");
  gen_cmd->add_option("--test-clouds", test_count, "held-out clouds");
  gen_cmd->add_option("--points", points, "points per cloud");
  gen_cmd->add_option("--noise", noise, "Gaussian coordinate noise sigma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*train_cmd) return run_train(flags, data_dir, train_split, resume, stop_after);
    if (*eval_cmd) return run_eval(flags, checkpoint, data_dir, eval_split);
    if (*infer_cmd) return run_infer(flags, checkpoint, input, output);
    if (*export_cmd) return run_export(flags, checkpoint, input, data_dir, export_split);
    if (*bench_cmd) return run_bench(flags, bench);
    if (*gen_cmd) return run_gen(flags, train_count, test_count, points, noise);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), 2);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), 1);
  } catch (const std::out_of_range& e) {
    return fail("out-of-range", e.what(), 1);
  } catch (const std::invalid_argument& e) {
    return fail("invalid-argument", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
