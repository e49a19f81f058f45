// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "yogo/rim.hpp"

using namespace yogo;
using namespace yogo::testing;
using doctest::Approx;

namespace {

struct Layer {
  std::vector<Parameter> store;
  RimParams params;
};

Layer make_layer(std::size_t c_prev, std::size_t c, std::size_t ct, RimVariant variant = RimVariant::full,
                 Pooling pooling = Pooling::max, std::uint64_t seed = 1) {
  Layer l;
  std::mt19937_64 rng(seed);
  l.params = init_rim_params(l.store, "rim", c_prev, c, ct, pooling, variant, false, rng);
  return l;
}

SubRegionIndex make_sub(const PointCloud& cloud, std::size_t l, std::size_t k, std::uint64_t seed = 3) {
  SubRegionSpec spec;
  spec.num_regions = l;
  spec.group_size = k;
  return build_subregions(cloud, spec, seed);
}

void set_identity(Tensor& w) {
  std::fill(w.data().begin(), w.data().end(), 0.0);
  for (std::size_t i = 0; i < std::min(w.extent(0), w.extent(1)); ++i) w.at(i, i) = 1.0;
}

// Explicit matrix product on plain tensors, for closed-form checks.
Tensor mm(const Tensor& a, const Tensor& b) {
  Tensor out({a.extent(0), b.extent(1)}, 0.0);
  for (std::size_t i = 0; i < a.extent(0); ++i) {
    for (std::size_t k = 0; k < a.extent(1); ++k) {
      for (std::size_t j = 0; j < b.extent(1); ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
    }
  }
  return out;
}

double max_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

std::size_t count_params(const std::vector<Parameter>& store) {
  std::size_t n = 0;
  for (const Parameter& p : store) n += p.value.size();
  return n;
}

}  // namespace

TEST_CASE("squeeze_tokens hand example") {
  Layer layer = make_layer(2, 2, 2);
  set_identity(layer.store[layer.params.squeeze.weight].value);
  layer.store[*layer.params.squeeze.bias].value = Tensor({2}, 0.0);
  SubRegionIndex sub;
  sub.centers = {0, 3};
  sub.group_size = 3;
  sub.members = {0, 1, 2, 3, 4, 5};
  const Tensor f({6, 2}, std::vector<double>{1, -1, 4, 0, 2, 3,  //
                                             -5, 2, -1, -2, -3, 7});
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  CHECK(squeeze_tokens(bind, tape.constant(f), sub, layer.params).value() ==
        Tensor({2, 2}, std::vector<double>{4, 3, -1, 7}));

  layer.params.pooling = Pooling::avg;
  const Tensor avg = squeeze_tokens(bind, tape.constant(f), sub, layer.params).value();
  CHECK(avg[0] == Approx(7.0 / 3.0));
  CHECK(avg[1] == Approx(2.0 / 3.0));
  CHECK(avg[2] == Approx(-3.0));
  CHECK(avg[3] == Approx(7.0 / 3.0));
}

TEST_CASE("identical point features give identical tokens") {
  Layer layer = make_layer(4, 5, 6);
  const PointCloud cloud = random_cloud(30, 2);
  const SubRegionIndex sub = make_sub(cloud, 4, 6);
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  const Tensor t = squeeze_tokens(bind, tape.constant(Tensor({30, 5}, 0.7)), sub, layer.params).value();
  for (std::size_t j = 1; j < 4; ++j) {
    for (std::size_t c = 0; c < 6; ++c) CHECK(t.at(j, c) == t.at(0, c));
  }
}

TEST_CASE("self-attention collapses for a single token") {
  Layer layer = make_layer(3, 4, 5);
  const auto& w = *layer.params.self_attention;
  const Tensor tokens = random_tensor({1, 5}, 4);
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  const AttentionOutput out = token_self_attention(bind, tape.constant(tokens), layer.params);
  CHECK(out.coefficients.value().item() == 1.0);
  Tensor inner = mm(tokens, layer.store[w[2]].value);
  for (std::size_t c = 0; c < 5; ++c) inner[c] += tokens[c];
  CHECK(max_diff(out.out.value(), mm(inner, layer.store[w[3]].value)) < 1e-14);
}

TEST_CASE("self-attention over equal tokens is uniform") {
  Layer layer = make_layer(3, 4, 5);
  Tensor tokens({6, 5});
  const Tensor row = random_tensor({5}, 5);
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < 5; ++c) tokens.at(j, c) = row[c];
  }
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  const Tensor coeff = token_self_attention(bind, tape.constant(tokens), layer.params).coefficients.value();
  for (double v : coeff.values()) CHECK(v == Approx(1.0 / 6.0).epsilon(1e-14));
}

TEST_CASE("cross-attention collapses for a single token") {
  Layer layer = make_layer(3, 4, 5);
  const auto& w = *layer.params.cross_attention;
  const Tensor tokens = random_tensor({1, 5}, 6);
  const Tensor points = random_tensor({7, 4}, 7);
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  const AttentionOutput out = cross_attention_project(bind, tape.constant(tokens), tape.constant(points), layer.params);
  for (double v : out.coefficients.value().values()) CHECK(v == 1.0);

  // G' applied by hand: relu(T W1 + b1) W2 + b2.
  Tensor hidden = mm(tokens, layer.store[layer.params.expand_hidden.weight].value);
  for (std::size_t c = 0; c < 5; ++c) {
    hidden[c] = std::max(0.0, hidden[c] + layer.store[*layer.params.expand_hidden.bias].value[c]);
  }
  Tensor expanded = mm(hidden, layer.store[layer.params.expand_out.weight].value);
  for (std::size_t c = 0; c < 4; ++c) expanded[c] += layer.store[*layer.params.expand_out.bias].value[c];
  const Tensor tv = mm(expanded, layer.store[w[2]].value);
  Tensor inner({7, 4});
  for (std::size_t i = 0; i < 7; ++i) {
    for (std::size_t c = 0; c < 4; ++c) inner.at(i, c) = tv[c] + points.at(i, c);
  }
  CHECK(max_diff(out.out.value(), mm(inner, layer.store[w[3]].value)) < 1e-13);
}

TEST_CASE("cross-attention rows depend only on their own point") {
  Layer layer = make_layer(3, 4, 5);
  const Tensor tokens = random_tensor({3, 5}, 8);
  const Tensor points = random_tensor({6, 4}, 9);
  Tensor fewer({5, 4});
  for (std::size_t i = 0, r = 0; i < 6; ++i) {
    if (i == 2) continue;
    for (std::size_t c = 0; c < 4; ++c) fewer.at(r, c) = points.at(i, c);
    ++r;
  }
  Tape tape;
  ParameterBinding bind(tape, layer.store);
  const Tensor a = cross_attention_project(bind, tape.constant(tokens), tape.constant(points), layer.params).out.value();
  const Tensor b = cross_attention_project(bind, tape.constant(tokens), tape.constant(fewer), layer.params).out.value();
  for (std::size_t i = 0, r = 0; i < 6; ++i) {
    if (i == 2) continue;
    for (std::size_t c = 0; c < 4; ++c) CHECK(b.at(r, c) == a.at(i, c));
    ++r;
  }
}

TEST_CASE("output shapes for the default channel schedule") {
  const std::vector<std::size_t> schedule{32, 32, 64, 64, 128, 128, 256, 256};
  std::vector<Parameter> store;
  std::vector<RimParams> layers;
  std::mt19937_64 rng(2);
  std::size_t prev = 3;
  for (std::size_t c : schedule) {
    layers.push_back(init_rim_params(store, "rim", prev, c, 256, Pooling::max, RimVariant::full, false, rng));
    prev = c;
  }
  const PointCloud cloud = random_cloud(128, 3);
  const SubRegionIndex sub = make_sub(cloud, 32, 16);
  Tape tape(false);
  ParameterBinding bind(tape, store);
  Tensor xyz({128, 3});
  for (std::size_t i = 0; i < 128; ++i) {
    for (std::size_t a = 0; a < 3; ++a) xyz.at(i, a) = cloud.points[i][a];
  }
  Var f = tape.constant(xyz);
  for (std::size_t l = 0; l < schedule.size(); ++l) {
    const RimOutput out = rim_forward(bind, f, sub, layers[l]);
    CHECK(out.features.shape() == Shape{128, schedule[l]});
    CHECK(out.tokens.shape() == Shape{32, 256});
    CHECK(out.token_coefficients->shape() == Shape{32, 32});
    CHECK(out.point_coefficients->shape() == Shape{128, 32});
    f = out.features;
  }
}

TEST_CASE("every variant keeps the layer's output shapes") {
  const PointCloud cloud = random_cloud(40, 4);
  const SubRegionIndex sub = make_sub(cloud, 5, 8);
  for (RimVariant v : all_variants()) {
    CAPTURE(to_string(v));
    Layer layer = make_layer(3, 6, 7, v);
    Tape tape(false);
    ParameterBinding bind(tape, layer.store);
    const RimOutput out = rim_forward(bind, tape.constant(random_tensor({40, 3}, 5)), sub, layer.params);
    CHECK(out.features.shape() == Shape{40, 6});
    CHECK(out.tokens.shape() == Shape{5, 7});
    CHECK(out.token_coefficients.has_value() == (v != RimVariant::no_sa_mlp));
    CHECK(out.point_coefficients.has_value() == (v == RimVariant::full || v == RimVariant::no_sa_mlp));
  }
}

TEST_CASE("per-layer parameter counts") {
  const std::size_t cp = 5, c = 6, ct = 7;
  const std::size_t base = (cp * c + c) + (c * ct + ct) + 4 * ct * ct + (ct * ct + ct) + (ct * c + c);
  CHECK(count_params(make_layer(cp, c, ct, RimVariant::full).store) == base + 4 * c * c);
  CHECK(count_params(make_layer(cp, c, ct, RimVariant::no_sa_mlp).store) == base + 4 * c * c);
  CHECK(count_params(make_layer(cp, c, ct, RimVariant::no_ca_global_concat).store) == base + 2 * c * c + c);
  CHECK(count_params(make_layer(cp, c, ct, RimVariant::no_ca_add_tokens).store) == base);
  CHECK(count_params(make_layer(cp, c, ct, RimVariant::no_ca_concat_tokens).store) == base + 2 * c * c + c);
}

TEST_CASE("weights start inside the uniform fan-in bound") {
  const Layer layer = make_layer(9, 16, 25);
  for (const Parameter& p : layer.store) {
    const std::size_t fan_in = p.value.rank() == 2 ? p.value.extent(0) : 0;
    if (fan_in == 0) continue;
    const double bound = std::sqrt(1.0 / double(fan_in));
    for (double v : p.value.values()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("global maxpool ignores entries below the argmax") {
  const Tensor tokens = random_tensor({6, 4}, 10);
  Tape tape;
  const MaxPoolResult a = maxpool_axis(tape.constant(tokens), 0);
  Tensor lowered = tokens;
  for (std::size_t j = 0; j < 6; ++j) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (a.argmax[c] != j * 4 + c) lowered.at(j, c) -= 3.0;
    }
  }
  CHECK(maxpool_axis(tape.constant(lowered), 0).out.value() == a.out.value());
}

TEST_CASE("region membership averages over covering regions") {
  SubRegionIndex sub;
  sub.centers = {0, 2, 4};
  sub.group_size = 2;
  sub.members = {0, 1, 1, 2, 4, 4};
  const Tensor m = region_membership(sub, 5);
  CHECK(m == Tensor({5, 3}, std::vector<double>{1, 0, 0,      //
                                                0.5, 0.5, 0,  //
                                                0, 1, 0,      //
                                                0, 0, 0,      //
                                                0, 0, 1}));
}

TEST_CASE("variant and pooling names") {
  for (RimVariant v : all_variants()) CHECK(parse_variant(to_string(v)) == v);
  CHECK(parse_pooling("avg") == Pooling::avg);
  CHECK_THROWS_AS(parse_variant("no_sa"), std::invalid_argument);
  CHECK_THROWS_AS(parse_pooling("sum"), std::invalid_argument);
}

TEST_CASE("rim gradients on the reference instance") {
  // N = 32, L = 4, K = 8, C = 8, C_T = 16.
  for (RimVariant v : all_variants()) {
    CAPTURE(to_string(v));
    Layer layer = make_layer(8, 8, 16, v, Pooling::max, 21);
    const std::size_t input = layer.store.size();
    layer.store.push_back({"input", random_tensor({32, 8}, 22)});
    const SubRegionIndex sub = make_sub(random_cloud(32, 23), 4, 8);
    const auto g = check_parameter_gradients(
        [&](Tape&, ParameterBinding& bind) {
          const RimOutput o = rim_forward(bind, bind(input), sub, layer.params);
          return add(random_projection(o.features), random_projection(o.tokens, 4));
        },
        layer.store);
    CHECK(g.max_rel_error < 1e-4);
  }
}
