// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient checks against the tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "yogo/autodiff.hpp"

namespace yogo::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
  std::string worst;  // "<input>[<flat index>]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// rel = |analytic - numeric| / max(|analytic|, |numeric|, floor). Central differences
// at h = 1e-5 carry roundoff near 1e-10 * |loss|, so entries below the floor
// are held to an absolute error of floor * 1e-4 instead.
inline constexpr double kGradFloor = 1e-4;
inline constexpr double kGradStep = 1e-5;

inline void record(GradCheck& r, double analytic, double numeric, const std::string& where) {
  const double rel =
      std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
  ++r.entries;
  if (rel > r.max_rel_error) {
    r.max_rel_error = rel;
    r.worst = where;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

// Reduces any tensor to a scalar with fixed pseudo-random weights, so every
// output entry contributes a distinct amount to the checked gradient.
inline Var random_projection(Var x, std::uint64_t seed = 17) {
  const std::size_t n = shape_size(x.shape());
  std::mt19937_64 rng(seed + n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor w({n, 1});
  for (double& v : w.data()) v = u(rng);
  return sum(matmul(reshape(x, {1, n}), x.tape()->constant(w)));
}

using InputLoss = std::function<Var(Tape&, std::span<const Var>)>;

// Checks d loss / d input for every entry of every input tensor.
inline GradCheck check_input_gradients(const InputLoss& loss, std::vector<Tensor> inputs, double h = kGradStep) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
    Var out = loss(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }
  auto eval = [&]() {
    Tape tape(false);
    std::vector<Var> vars;
    for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
    return loss(tape, vars).value().item();
  };
  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      inputs[k][i] = x0 + h;
      const double fp = eval();
      inputs[k][i] = x0 - h;
      const double fm = eval();
      inputs[k][i] = x0;
      record(r, analytic[k][i], (fp - fm) / (2.0 * h), "input" + std::to_string(k) + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

using ParameterLoss = std::function<Var(Tape&, ParameterBinding&)>;

// Checks d loss / d parameter for every entry of every parameter in `params`.
inline GradCheck check_parameter_gradients(const ParameterLoss& loss, std::span<Parameter> params,
                                           double h = kGradStep) {
  std::vector<Tensor> analytic;
  for (const Parameter& p : params) analytic.emplace_back(p.value.shape(), 0.0);
  {
    Tape tape;
    ParameterBinding bind(tape, params);
    Var out = loss(tape, bind);
    tape.backward(out);
    tape.accumulate_parameter_grads(analytic);
  }
  auto eval = [&]() {
    Tape tape(false);
    ParameterBinding bind(tape, params);
    return loss(tape, bind).value().item();
  };
  GradCheck r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].value.size(); ++i) {
      double& x = params[k].value.data()[i];
      const double x0 = x;
      x = x0 + h;
      const double fp = eval();
      x = x0 - h;
      const double fm = eval();
      x = x0;
      record(r, analytic[k][i], (fp - fm) / (2.0 * h), params[k].name + "[" + std::to_string(i) + "]");
    }
  }
  return r;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace yogo::testing
