// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Relation inference module: per-layer channel lift, token squeeze over
// sub-regions, token self-attention, and token-to-point cross-attention.
// Ablation variants swap out the self-attention or cross-attention stage.

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "yogo/autodiff.hpp"
#include "yogo/geometry.hpp"

namespace yogo {

enum class Pooling { max, avg };

enum class RimVariant {
  full,
  no_sa_mlp,            // self-attention replaced by a bias-free 2-layer MLP
  no_ca_global_concat,  // pooled global token concatenated to every point
  no_ca_add_tokens,     // region tokens added to their member points
  no_ca_concat_tokens,  // region tokens concatenated to their member points
};

std::string to_string(Pooling p);
std::string to_string(RimVariant v);
Pooling parse_pooling(const std::string& text);
RimVariant parse_variant(const std::string& text);
const std::vector<RimVariant>& all_variants();

/// Slots of a linear map inside a flat parameter store.
struct LinearSlots {
  std::size_t weight = 0;
  std::optional<std::size_t> bias;
};

struct RimParams {
  std::size_t in_channels = 0;     // C_prev
  std::size_t channels = 0;        // C
  std::size_t token_channels = 0;  // C_T
  Pooling pooling = Pooling::max;
  RimVariant variant = RimVariant::full;
  bool scaled_attention = false;

  LinearSlots lift;     // C_prev -> C, followed by relu
  LinearSlots squeeze;  // G: C -> C_T

  // Self-attention projections (query, key, value, project), each C_T x C_T.
  std::optional<std::array<std::size_t, 4>> self_attention;
  // no_sa_mlp replacement: C_T -> 2 C_T -> C_T, bias-free.
  std::optional<std::array<std::size_t, 2>> token_mlp;

  // G': C_T -> C_T -> C with relu between.
  LinearSlots expand_hidden;
  LinearSlots expand_out;

  // Cross-attention projections (query, key, value, project), each C x C.
  std::optional<std::array<std::size_t, 4>> cross_attention;
  // 2C -> C fusion for the concat variants.
  std::optional<LinearSlots> fuse;
};

/// Appends freshly initialised parameters for one layer to `store`; weights
/// and biases are drawn from U(-sqrt(1/fan_in), sqrt(1/fan_in)).
RimParams init_rim_params(std::vector<Parameter>& store, const std::string& prefix, std::size_t in_channels,
                          std::size_t channels, std::size_t token_channels, Pooling pooling, RimVariant variant,
                          bool scaled_attention, std::mt19937_64& rng);

/// Shared by the model and tests: appends a uniformly initialised linear map.
LinearSlots add_linear(std::vector<Parameter>& store, const std::string& name, std::size_t fan_in,
                       std::size_t fan_out, bool with_bias, std::mt19937_64& rng);

Var apply_linear(ParameterBinding& bind, Var x, const LinearSlots& slots);

struct AttentionOutput {
  Var out;
  Var coefficients;  // post-softmax, row-stochastic
};

struct RimOutput {
  Var features;  // N x C
  Var tokens;    // L x C_T (after self-attention)
  std::optional<Var> token_coefficients;  // L x L
  std::optional<Var> point_coefficients;  // N x L
};

/// Pools each region's K gathered members and maps the result through G.
Var squeeze_tokens(ParameterBinding& bind, Var point_features, const SubRegionIndex& sub, const RimParams& params);

AttentionOutput token_self_attention(ParameterBinding& bind, Var tokens, const RimParams& params);

/// Every point attends to all L tokens through one N x L coefficient matrix.
AttentionOutput cross_attention_project(ParameterBinding& bind, Var tokens, Var point_features,
                                        const RimParams& params);

/// Lift, squeeze, self-attention, cross-attention; dispatches on params.variant.
RimOutput rim_forward(ParameterBinding& bind, Var point_features, const SubRegionIndex& sub, const RimParams& params);

/// N x L matrix whose row i averages over the distinct regions containing point i
/// (all-zero row for points outside every region).
Tensor region_membership(const SubRegionIndex& sub, std::size_t num_points);

}  // namespace yogo
