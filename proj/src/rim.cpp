// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/rim.hpp"

#include <cmath>
#include <stdexcept>

namespace yogo {

std::string to_string(Pooling p) { return p == Pooling::max ? "max" : "avg"; }

std::string to_string(RimVariant v) {
  switch (v) {
    case RimVariant::full:
      return "full";
    case RimVariant::no_sa_mlp:
      return "no_sa_mlp";
    case RimVariant::no_ca_global_concat:
      return "no_ca_global_concat";
    case RimVariant::no_ca_add_tokens:
      return "no_ca_add_tokens";
    case RimVariant::no_ca_concat_tokens:
      return "no_ca_concat_tokens";
  }
  throw std::invalid_argument("unknown rim variant");
}

Pooling parse_pooling(const std::string& text) {
  if (text == "max") return Pooling::max;
  if (text == "avg") return Pooling::avg;
  throw std::invalid_argument("unknown pooling '" + text + "' (expected max|avg)");
}

const std::vector<RimVariant>& all_variants() {
  static const std::vector<RimVariant> v{RimVariant::full, RimVariant::no_sa_mlp, RimVariant::no_ca_global_concat,
                                         RimVariant::no_ca_add_tokens, RimVariant::no_ca_concat_tokens};
  return v;
}

RimVariant parse_variant(const std::string& text) {
  for (RimVariant v : all_variants()) {
    if (to_string(v) == text) return v;
  }
  throw std::invalid_argument("unknown variant '" + text +
                              "' (expected full|no_sa_mlp|no_ca_global_concat|no_ca_add_tokens|no_ca_concat_tokens)");
}

LinearSlots add_linear(std::vector<Parameter>& store, const std::string& name, std::size_t fan_in,
                       std::size_t fan_out, bool with_bias, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  LinearSlots slots;
  Tensor w({fan_in, fan_out});
  for (double& x : w.data()) x = dist(rng);
  slots.weight = store.size();
  store.push_back({name + ".weight", std::move(w)});
  if (with_bias) {
    Tensor b({fan_out});
    for (double& x : b.data()) x = dist(rng);
    slots.bias = store.size();
    store.push_back({name + ".bias", std::move(b)});
  }
  return slots;
}

namespace {

std::array<std::size_t, 4> add_projections(std::vector<Parameter>& store, const std::string& prefix, std::size_t dim,
                                           std::mt19937_64& rng) {
  std::array<std::size_t, 4> slots{};
  const char* names[] = {"query", "key", "value", "project"};
  for (std::size_t i = 0; i < 4; ++i) slots[i] = add_linear(store, prefix + "." + names[i], dim, dim, false, rng).weight;
  return slots;
}

enum Proj : std::size_t { kQuery = 0, kKey = 1, kValue = 2, kProject = 3 };

}  // namespace

RimParams init_rim_params(std::vector<Parameter>& store, const std::string& prefix, std::size_t in_channels,
                          std::size_t channels, std::size_t token_channels, Pooling pooling, RimVariant variant,
                          bool scaled_attention, std::mt19937_64& rng) {
  if (in_channels == 0 || channels == 0 || token_channels == 0) {
    throw std::invalid_argument("rim layer channels must be positive");
  }
  RimParams p;
  p.in_channels = in_channels;
  p.channels = channels;
  p.token_channels = token_channels;
  p.pooling = pooling;
  p.variant = variant;
  p.scaled_attention = scaled_attention;

  p.lift = add_linear(store, prefix + ".lift", in_channels, channels, true, rng);
  p.squeeze = add_linear(store, prefix + ".squeeze", channels, token_channels, true, rng);
  if (variant == RimVariant::no_sa_mlp) {
    // 2 * C_T * 2C_T = 4 C_T^2 weights, the same count as the four projections.
    p.token_mlp = std::array<std::size_t, 2>{
        add_linear(store, prefix + ".token_mlp.hidden", token_channels, 2 * token_channels, false, rng).weight,
        add_linear(store, prefix + ".token_mlp.out", 2 * token_channels, token_channels, false, rng).weight};
  } else {
    p.self_attention = add_projections(store, prefix + ".self_attention", token_channels, rng);
  }
  p.expand_hidden = add_linear(store, prefix + ".expand.hidden", token_channels, token_channels, true, rng);
  p.expand_out = add_linear(store, prefix + ".expand.out", token_channels, channels, true, rng);
  switch (variant) {
    case RimVariant::full:
    case RimVariant::no_sa_mlp:
      p.cross_attention = add_projections(store, prefix + ".cross_attention", channels, rng);
      break;
    case RimVariant::no_ca_global_concat:
    case RimVariant::no_ca_concat_tokens:
      p.fuse = add_linear(store, prefix + ".fuse", 2 * channels, channels, true, rng);
      break;
    case RimVariant::no_ca_add_tokens:
      break;
  }
  return p;
}

Var apply_linear(ParameterBinding& bind, Var x, const LinearSlots& slots) {
  if (slots.bias) return linear(x, bind(slots.weight), bind(*slots.bias));
  return linear(x, bind(slots.weight));
}

Var squeeze_tokens(ParameterBinding& bind, Var point_features, const SubRegionIndex& sub, const RimParams& params) {
  const Tensor& f = point_features.value();
  if (f.rank() != 2 || f.extent(1) != params.channels) {
    throw std::invalid_argument("squeeze_tokens: point features " + shape_to_string(f.shape()) +
                                " do not have C=" + std::to_string(params.channels) + " columns");
  }
  Var grouped = gather(point_features, sub);  // L x K x C
  Var pooled = params.pooling == Pooling::max ? maxpool_axis(grouped, 1).out : avgpool_axis(grouped, 1);
  return apply_linear(bind, pooled, params.squeeze);
}

AttentionOutput token_self_attention(ParameterBinding& bind, Var tokens, const RimParams& params) {
  if (!params.self_attention) throw std::logic_error("token_self_attention: layer has no self-attention weights");
  const auto& w = *params.self_attention;
  Var q = matmul(tokens, bind(w[kQuery]));
  Var k = matmul(tokens, bind(w[kKey]));
  Var v = matmul(tokens, bind(w[kValue]));
  Var scores = matmul(k, transpose(q));  // L x L
  if (params.scaled_attention) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(params.token_channels)));
  Var coeff = softmax_lastaxis(scores);
  Var attended = add(matmul(coeff, v), tokens);
  return {matmul(attended, bind(w[kProject])), coeff};
}

namespace {

Var expand_tokens(ParameterBinding& bind, Var tokens, const RimParams& params) {
  return apply_linear(bind, relu(apply_linear(bind, tokens, params.expand_hidden)), params.expand_out);
}

}  // namespace

AttentionOutput cross_attention_project(ParameterBinding& bind, Var tokens, Var point_features,
                                        const RimParams& params) {
  if (!params.cross_attention) throw std::logic_error("cross_attention_project: layer has no cross-attention weights");
  const auto& w = *params.cross_attention;
  Var expanded = expand_tokens(bind, tokens, params);  // L x C
  Var q = matmul(expanded, bind(w[kQuery]));
  Var k = matmul(point_features, bind(w[kKey]));
  Var v = matmul(expanded, bind(w[kValue]));
  Var scores = matmul(k, transpose(q));  // N x L
  if (params.scaled_attention) scores = scale(scores, 1.0 / std::sqrt(static_cast<double>(params.channels)));
  Var coeff = softmax_lastaxis(scores);
  Var attended = add(matmul(coeff, v), point_features);
  return {matmul(attended, bind(w[kProject])), coeff};
}

Tensor region_membership(const SubRegionIndex& sub, std::size_t num_points) {
  const std::size_t l = sub.num_regions();
  Tensor m({num_points, l}, 0.0);
  for (std::size_t j = 0; j < l; ++j) {
    for (std::size_t i : sub.row(j)) {
      if (i >= num_points) throw std::out_of_range("region_membership: member index out of range");
      m[i * l + j] = 1.0;  // duplicates from padding collapse to one membership
    }
  }
  for (std::size_t i = 0; i < num_points; ++i) {
    double count = 0.0;
    for (std::size_t j = 0; j < l; ++j) count += m[i * l + j];
    if (count > 0.0) {
      for (std::size_t j = 0; j < l; ++j) m[i * l + j] /= count;
    }
  }
  return m;
}

RimOutput rim_forward(ParameterBinding& bind, Var point_features, const SubRegionIndex& sub, const RimParams& params) {
  const Tensor& in = point_features.value();
  if (in.rank() != 2 || in.extent(1) != params.in_channels) {
    throw std::invalid_argument("rim_forward: input " + shape_to_string(in.shape()) + " does not have " +
                                std::to_string(params.in_channels) + " channels");
  }
  Tape& tape = bind.tape();
  const std::size_t n = in.extent(0);

  RimOutput out;
  Var f = relu(apply_linear(bind, point_features, params.lift));
  Var tokens = squeeze_tokens(bind, f, sub, params);

  if (params.variant == RimVariant::no_sa_mlp) {
    const auto& w = *params.token_mlp;
    out.tokens = matmul(relu(matmul(tokens, bind(w[0]))), bind(w[1]));
  } else {
    AttentionOutput sa = token_self_attention(bind, tokens, params);
    out.tokens = sa.out;
    out.token_coefficients = sa.coefficients;
  }

  switch (params.variant) {
    case RimVariant::full:
    case RimVariant::no_sa_mlp: {
      AttentionOutput ca = cross_attention_project(bind, out.tokens, f, params);
      out.features = ca.out;
      out.point_coefficients = ca.coefficients;
      break;
    }
    case RimVariant::no_ca_global_concat: {
      Var global = maxpool_axis(out.tokens, 0).out;                        // C_T
      Var projected = reshape(expand_tokens(bind, global, params), {1, params.channels});
      Var broadcast = matmul(tape.constant(Tensor({n, 1}, 1.0)), projected);  // N x C
      const Var parts[] = {f, broadcast};
      out.features = apply_linear(bind, concat_lastaxis(parts), *params.fuse);
      break;
    }
    case RimVariant::no_ca_add_tokens:
    case RimVariant::no_ca_concat_tokens: {
      Var projected = expand_tokens(bind, out.tokens, params);  // L x C
      Var spread = matmul(tape.constant(region_membership(sub, n)), projected);
      if (params.variant == RimVariant::no_ca_add_tokens) {
        out.features = add(f, spread);
      } else {
        const Var parts[] = {f, spread};
        out.features = apply_linear(bind, concat_lastaxis(parts), *params.fuse);
      }
      break;
    }
  }
  return out;
}

}  // namespace yogo
