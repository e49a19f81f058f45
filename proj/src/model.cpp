// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace yogo {

std::string to_string(Task t) { return t == Task::segmentation ? "segmentation" : "classification"; }

Task parse_task(const std::string& text) {
  if (text == "segmentation") return Task::segmentation;
  if (text == "classification") return Task::classification;
  throw std::invalid_argument("unknown task '" + text + "' (expected segmentation|classification)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("invalid model config: " + what); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (channels.size() != num_layers) {
    fail("channels lists " + std::to_string(channels.size()) + " entries for " + std::to_string(num_layers) +
         " layers");
  }
  if (std::find(channels.begin(), channels.end(), 0u) != channels.end()) fail("channels must be positive");
  if (token_channels < 1) fail("token_channels must be >= 1");
  if (num_regions < 1) fail("regions (L) must be >= 1");
  if (group_size < 1) fail("group_size (K) must be >= 1");
  if (grouping == Grouping::ball && !(radius > 0.0)) fail("radius must be > 0 for ball grouping");
  if (output_dim() < 1) fail("output dimension must be >= 1");
  if (head_hidden < 1) fail("head_hidden must be >= 1");
}

SubRegionSpec ModelConfig::subregion_spec() const {
  return SubRegionSpec{sampling, grouping, num_regions, group_size, radius};
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"num_layers", std::to_string(num_layers)},
      {"channels", join_sizes(channels)},
      {"token_channels", std::to_string(token_channels)},
      {"regions", std::to_string(num_regions)},
      {"group_size", std::to_string(group_size)},
      {"radius", format_double(radius)},
      {"sampling", to_string(sampling)},
      {"grouping", to_string(grouping)},
      {"pooling", to_string(pooling)},
      {"variant", to_string(variant)},
      {"scaled_attention", scaled_attention ? "true" : "false"},
      {"task", to_string(task)},
      {"num_classes", std::to_string(num_classes)},
      {"num_parts", std::to_string(num_parts)},
      {"extra_features", std::to_string(extra_features)},
      {"conditioning_classes", std::to_string(conditioning_classes)},
      {"head_hidden", std::to_string(head_hidden)},
      {"model_seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) { return from_key_values(kv, ModelConfig{}); }

ModelConfig ModelConfig::from_key_values(const KeyValues& kv, const ModelConfig& base) {
  ModelConfig c = base;
  c.channels = kv_size_list(kv, "channels", base.channels);
  // A channel list implies the layer count unless one is given explicitly.
  c.num_layers = kv_size(kv, "num_layers", kv.count("channels") ? c.channels.size() : base.num_layers);
  c.token_channels = kv_size(kv, "token_channels", base.token_channels);
  c.num_regions = kv_size(kv, "regions", base.num_regions);
  c.group_size = kv_size(kv, "group_size", base.group_size);
  c.radius = kv_double(kv, "radius", base.radius);
  c.sampling = parse_sampling(kv_string(kv, "sampling", to_string(base.sampling)));
  c.grouping = parse_grouping(kv_string(kv, "grouping", to_string(base.grouping)));
  c.pooling = parse_pooling(kv_string(kv, "pooling", to_string(base.pooling)));
  c.variant = parse_variant(kv_string(kv, "variant", to_string(base.variant)));
  c.scaled_attention = kv_bool(kv, "scaled_attention", base.scaled_attention);
  c.task = parse_task(kv_string(kv, "task", to_string(base.task)));
  c.num_classes = kv_size(kv, "num_classes", base.num_classes);
  c.num_parts = kv_size(kv, "num_parts", base.num_parts);
  c.extra_features = kv_size(kv, "extra_features", base.extra_features);
  c.conditioning_classes = kv_size(kv, "conditioning_classes", base.conditioning_classes);
  c.head_hidden = kv_size(kv, "head_hidden", base.head_hidden);
  c.seed = kv_u64(kv, "model_seed", base.seed);
  return c;
}

// ---------------------------------------------------------------------------

YogoModel::YogoModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  std::size_t prev = config_.input_channels();
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    layers_.push_back(init_rim_params(params_, "rim" + std::to_string(l), prev, config_.channels[l],
                                      config_.token_channels, config_.pooling, config_.variant,
                                      config_.scaled_attention, rng));
    prev = config_.channels[l];
  }
  const std::size_t head_in = config_.task == Task::segmentation ? config_.channels.back() : config_.token_channels;
  const std::string head_name = config_.task == Task::segmentation ? "seg_head" : "cls_head";
  head_.hidden = add_linear(params_, head_name + ".hidden", head_in, config_.head_hidden, true, rng);
  head_.out = add_linear(params_, head_name + ".out", config_.head_hidden, config_.output_dim(), true, rng);
}

std::size_t YogoModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

bool YogoModel::operator==(const YogoModel& other) const {
  if (!(config_ == other.config_) || params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

Tensor input_features(const ModelConfig& config, const PointCloud& cloud) {
  cloud.validate();
  if (cloud.feature_dim != config.extra_features) {
    throw std::invalid_argument("cloud carries " + std::to_string(cloud.feature_dim) +
                                " extra features, model expects " + std::to_string(config.extra_features));
  }
  const std::size_t n = cloud.size(), c = config.input_channels();
  Tensor x({n, c}, 0.0);
  std::optional<std::size_t> hot;
  if (config.conditioning_classes > 0) {
    if (!cloud.class_id || *cloud.class_id < 0 ||
        static_cast<std::size_t>(*cloud.class_id) >= config.conditioning_classes) {
      throw std::invalid_argument("class conditioning needs a class id in [0, " +
                                  std::to_string(config.conditioning_classes) + ")");
    }
    hot = 3 + config.extra_features + static_cast<std::size_t>(*cloud.class_id);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < 3; ++a) x[i * c + a] = cloud.points[i][a];
    for (std::size_t f = 0; f < cloud.feature_dim; ++f) x[i * c + 3 + f] = cloud.features[i * cloud.feature_dim + f];
    if (hot) x[i * c + *hot] = 1.0;
  }
  return x;
}

ForwardOutput forward_with_subregions(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                                      const SubRegionIndex& sub) {
  const ModelConfig& cfg = model.config();
  ForwardOutput out;
  out.subregions = sub;
  Var features = bind.tape().constant(input_features(cfg, cloud));
  for (const RimParams& layer : model.layers()) {
    out.layers.push_back(rim_forward(bind, features, out.subregions, layer));
    features = out.layers.back().features;
  }
  const HeadParams& head = model.head();
  Var head_in = cfg.task == Task::segmentation ? features : maxpool_axis(out.layers.back().tokens, 0).out;
  out.logits = apply_linear(bind, relu(apply_linear(bind, head_in, head.hidden)), head.out);
  return out;
}

ForwardOutput forward(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                      std::uint64_t sampling_seed) {
  SubRegionIndex sub = build_subregions(cloud, model.config().subregion_spec(), sampling_seed);
  return forward_with_subregions(model, bind, cloud, sub);
}

Var forward_segmentation(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                         std::uint64_t sampling_seed) {
  if (model.config().task != Task::segmentation) throw std::invalid_argument("model is not a segmentation model");
  return forward(model, bind, cloud, sampling_seed).logits;
}

Var forward_classification(const YogoModel& model, ParameterBinding& bind, const PointCloud& cloud,
                           std::uint64_t sampling_seed) {
  if (model.config().task != Task::classification) {
    throw std::invalid_argument("model is not a classification model");
  }
  return forward(model, bind, cloud, sampling_seed).logits;
}

Var loss_classification(Var logits, std::size_t label) { return cross_entropy_from_logits(logits, label); }

Var loss_segmentation(Var logits, std::span<const int> labels) {
  std::vector<std::size_t> targets;
  targets.reserve(labels.size());
  for (int l : labels) {
    if (l < 0) throw std::out_of_range("negative segmentation label");
    targets.push_back(static_cast<std::size_t>(l));
  }
  return mean_cross_entropy_rows(logits, targets);
}

std::uint64_t vote_seed(std::uint64_t seed, std::size_t vote) { return vote == 0 ? seed : mix_seed(seed, vote); }

Tensor predict_with_voting(const YogoModel& model, const PointCloud& cloud, std::size_t votes, std::uint64_t seed) {
  if (votes < 1) throw std::invalid_argument("votes must be >= 1");
  Tensor acc;
  for (std::size_t v = 0; v < votes; ++v) {
    Tape tape(false);
    ParameterBinding bind(tape, model.parameters());
    const Tensor& probs = softmax_lastaxis(forward(model, bind, cloud, vote_seed(seed, v)).logits).value();
    if (v == 0) {
      acc = probs;
    } else {
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += probs[i];
    }
  }
  if (votes > 1) {
    const double inv = 1.0 / static_cast<double>(votes);
    for (double& x : acc.data()) x *= inv;
  }
  return acc;
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kEndHeader = "end-header";

std::string dims_to_string(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "x" : "") + std::to_string(shape[i]);
  return s;
}

Shape dims_from_string(const std::string& text) {
  if (text == "scalar") return {};
  Shape shape;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, 'x')) shape.push_back(std::stoull(item));
  return shape;
}

void write_le(std::ostream& out, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void read_le(const std::string& payload, std::size_t offset, std::span<double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[offset + i * 8 + b])) << (8 * b);
    }
    values[i] = std::bit_cast<double>(bits);
  }
}

void check_header_text(const std::string& s, bool is_key) {
  if (s.find('\n') != std::string::npos || (is_key && (s.empty() || s.find('=') != std::string::npos))) {
    throw std::invalid_argument("invalid checkpoint metadata text: '" + s + "'");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const YogoModel& model, const AdamState* optimizer,
                     const KeyValues& metadata) {
  struct Entry {
    std::string name;
    const Tensor* tensor;
  };
  std::vector<Entry> entries;
  for (const Parameter& p : model.parameters()) entries.push_back({p.name, &p.value});
  if (optimizer) {
    if (optimizer->m.size() != entries.size() || optimizer->v.size() != entries.size()) {
      throw std::invalid_argument("optimizer state does not match model parameters");
    }
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) entries.push_back({"adam.m/" + params[i].name, &optimizer->m[i]});
    for (std::size_t i = 0; i < params.size(); ++i) entries.push_back({"adam.v/" + params[i].name, &optimizer->v[i]});
  }

  std::ostringstream header;
  header << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  for (const auto& [k, v] : model.config().to_key_values()) header << "config." << k << " = " << v << '\n';
  if (optimizer) header << "optimizer.step = " << optimizer->step << '\n';
  for (const auto& [k, v] : metadata) {
    check_header_text(k, true);
    check_header_text(v, false);
    header << "meta." << k << " = " << v << '\n';
  }
  std::size_t offset = 0;
  for (const Entry& e : entries) {
    header << "tensor " << e.name << ' ' << dims_to_string(e.tensor->shape()) << ' ' << offset << '\n';
    offset += e.tensor->size() * 8;
  }
  header << kEndHeader << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const Entry& e : entries) write_le(out, e.tensor->data());
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  auto corrupt = [&path](const std::string& why) {
    return std::runtime_error("malformed checkpoint " + path + ": " + why);
  };

  std::string line;
  if (!std::getline(in, line) || line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion)) {
    throw corrupt("bad format line");
  }
  KeyValues config_kv, meta;
  std::optional<std::int64_t> step;
  struct Manifest {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Manifest> manifest;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == kEndHeader) {
      ended = true;
      break;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream ls(line.substr(7));
      Manifest m;
      std::string dims;
      if (!(ls >> m.name >> dims >> m.offset)) throw corrupt("bad tensor line '" + line + "'");
      m.shape = dims_from_string(dims);
      manifest.push_back(std::move(m));
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw corrupt("bad header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key.rfind("config.", 0) == 0) {
      config_kv[key.substr(7)] = value;
    } else if (key.rfind("meta.", 0) == 0) {
      meta[key.substr(5)] = value;
    } else if (key == "optimizer.step") {
      step = std::stoll(value);
    } else {
      throw corrupt("unknown header key '" + key + "'");
    }
  }
  if (!ended) throw corrupt("missing end-header");
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint ck{YogoModel(ModelConfig::from_key_values(config_kv)), std::nullopt, std::move(meta)};
  auto params = ck.model.parameters();
  const std::size_t np = params.size();
  if (manifest.size() != np && manifest.size() != 3 * np) throw corrupt("tensor count does not match config");
  if (manifest.size() == 3 * np) {
    if (!step) throw corrupt("optimizer tensors without optimizer.step");
    ck.optimizer = AdamState::zeros_like(params);
    ck.optimizer->step = *step;
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const Manifest& m = manifest[i];
    const std::size_t slot = i % np;
    const std::string prefix = i < np ? "" : (i < 2 * np ? "adam.m/" : "adam.v/");
    if (m.name != prefix + params[slot].name) throw corrupt("unexpected tensor '" + m.name + "'");
    if (m.shape != params[slot].value.shape()) throw corrupt("shape mismatch for '" + m.name + "'");
    if (m.offset != expected_offset) throw corrupt("offset mismatch for '" + m.name + "'");
    Tensor& dst = i < np ? params[slot].value : (i < 2 * np ? ck.optimizer->m[slot] : ck.optimizer->v[slot]);
    if (m.offset + dst.size() * 8 > payload.size()) throw corrupt("payload truncated at '" + m.name + "'");
    read_le(payload, m.offset, dst.data());
    expected_offset += dst.size() * 8;
  }
  if (expected_offset != payload.size()) throw corrupt("trailing bytes after payload");
  return ck;
}

}  // namespace yogo
