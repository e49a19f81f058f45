// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// The stacked-RIM network, its task heads and losses, voting inference, and
// the checkpoint container.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "yogo/autodiff.hpp"
#include "yogo/config.hpp"
#include "yogo/geometry.hpp"
#include "yogo/rim.hpp"

namespace yogo {

enum class Task { segmentation, classification };

std::string to_string(Task t);
Task parse_task(const std::string& text);

struct ModelConfig {
  std::size_t num_layers = 8;
  std::vector<std::size_t> channels{32, 32, 64, 64, 128, 128, 256, 256};
  std::size_t token_channels = 256;  // C_T
  std::size_t num_regions = 32;      // L
  std::size_t group_size = 96;       // K
  double radius = 0.2;
  Sampling sampling = Sampling::fps;
  Grouping grouping = Grouping::knn;
  Pooling pooling = Pooling::max;
  RimVariant variant = RimVariant::full;
  bool scaled_attention = false;
  Task task = Task::segmentation;
  std::size_t num_classes = 40;
  std::size_t num_parts = 50;
  std::size_t extra_features = 0;        // per-point features beyond xyz
  std::size_t conditioning_classes = 0;  // one-hot object class appended to inputs when > 0
  std::size_t head_hidden = 128;
  std::uint64_t seed = 0;  // weight initialisation

  void validate() const;
  std::size_t input_channels() const { return 3 + extra_features + conditioning_classes; }
  std::size_t output_dim() const { return task == Task::segmentation ? num_parts : num_classes; }
  SubRegionSpec subregion_spec() const;

  KeyValues to_key_values() const;
  /// Keys absent from `kv` keep the values already in `base`.
  static ModelConfig from_key_values(const KeyValues& kv, const ModelConfig& base);
  static ModelConfig from_key_values(const KeyValues& kv);

  bool operator==(const ModelConfig&) const = default;
};

struct HeadParams {
  LinearSlots hidden;
  LinearSlots out;
};

class YogoModel {
 public:
  /// Initialises all weights deterministically from config.seed.
  explicit YogoModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const std::vector<RimParams>& layers() const { return layers_; }
  const HeadParams& head() const { return head_; }

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  std::size_t parameter_count() const;

  bool operator==(const YogoModel& other) const;

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
  std::vector<RimParams> layers_;
  HeadParams head_;
};

struct ForwardOutput {
  Var logits;  // N x parts (segmentation) or classes (classification)
  SubRegionIndex subregions;
  std::vector<RimOutput> layers;
};

/// Builds the N x input_channels tensor: xyz, extra features, optional one-hot class.
Tensor input_features(const ModelConfig& config, const PointCloud& cloud);

/// Samples and groups once, then runs every layer on the shared index table.
ForwardOutput forward(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                      std::uint64_t sampling_seed);
ForwardOutput forward_with_subregions(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                                      const SubRegionIndex& sub);

/// Per-point logits [N x num_parts]. Requires task == segmentation.
Var forward_segmentation(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                         std::uint64_t sampling_seed);
/// Cloud logits [num_classes] from the max-pooled final tokens. Requires task == classification.
Var forward_classification(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                           std::uint64_t sampling_seed);

Var loss_classification(Var logits, std::size_t label);
Var loss_segmentation(Var logits, std::span<const int> labels);

/// Mean of softmax outputs over `votes` forwards. Vote 0 uses `seed` itself, so
/// votes == 1 reproduces a plain forward with that seed.
Tensor predict_with_voting(const YogoModel& model, const PointCloud& cloud, std::size_t votes, std::uint64_t seed);

std::uint64_t vote_seed(std::uint64_t seed, std::size_t vote);

// ---------------------------------------------------------------------------
// Checkpoints: a text header (format line, `key = value` config and metadata,
// tensor manifest) followed by little-endian float64 payloads in manifest order.

struct Checkpoint {
  YogoModel model;
  std::optional<AdamState> optimizer;
  KeyValues metadata;
};

inline constexpr const char* kCheckpointMagic = "YOGO-CHECKPOINT";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const YogoModel& model, const AdamState* optimizer = nullptr,
                     const KeyValues& metadata = {});
Checkpoint load_checkpoint(const std::string& path);

}  // namespace yogo
