// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense 64-bit tensors and a single-threaded reverse-mode tape.
//
// Every forward op appends one node to a Tape. Nodes hold their value, a lazily
// allocated gradient buffer, and a backward rule that scatters the node's
// gradient into its inputs. Tape::backward walks nodes in exact reverse
// execution order, so reused inputs accumulate gradients by summation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace yogo {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Row-major 2-D access.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }

  double item() const;

  // Bitwise comparison of shape and payload.
  bool operator==(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Named trainable tensor. Model code owns these; tapes only reference them.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the tape, the gradient flowing into the op's output, and the
  /// output value itself.
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out, const Tensor& out)>;

  /// With record_gradients == false no backward rules are stored (inference).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires a gradient, e.g. an input checked by finite differences.
  Var variable(Tensor value);
  /// Leaf referencing an externally owned parameter; its gradient is later
  /// flushed to slot `slot` by accumulate_parameter_grads.
  Var parameter(const Parameter& param, std::size_t slot);

  /// Appends an op result. `backward` is dropped unless an input requires grad.
  Var push(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward);
  Var push(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return push(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
  }

  void backward(Var root);

  const Tensor& value(std::size_t id) const { return *nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool recording() const { return record_; }

  /// Gradient of node `id`; a zero tensor of matching shape if never touched.
  Tensor grad(Var v) const;
  /// Mutable gradient buffer, allocated to zeros on first use.
  Tensor& grad_buffer(std::size_t id);
  /// Read-only view of a gradient that backward has already populated.
  const Tensor& grad_ref(std::size_t id) const { return nodes_[id].grad; }

  /// Adds each parameter leaf's gradient into out[slot] (shapes must match).
  void accumulate_parameter_grads(std::span<Tensor> out) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string_view op;
    Tensor storage;
    const Tensor* value = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::optional<std::size_t> param_slot;
    BackwardFn backward;
  };

  Var add_leaf(std::string_view op, Tensor value, bool requires_grad);

  bool record_;
  std::deque<Node> nodes_;
};

/// Lazily registers parameters from a flat store onto one tape, so every
/// parameter appears as at most one leaf per forward pass.
class ParameterBinding {
 public:
  ParameterBinding(Tape& tape, std::span<const Parameter> store)
      : tape_(&tape), store_(store), bound_(store.size()) {}

  Var operator()(std::size_t slot);
  Tape& tape() const { return *tape_; }

 private:
  Tape* tape_;
  std::span<const Parameter> store_;
  std::vector<std::optional<Var>> bound_;
};

// ---------------------------------------------------------------------------
// Differentiable ops. All operands must live on the same tape.

Var matmul(Var a, Var b);
Var transpose(Var x);
/// Same data, new shape of equal size.
Var reshape(Var x, Shape shape);
Var add(Var x, Var y);
Var scale(Var x, double factor);
Var relu(Var x);
Var sum(Var x);

/// Max-subtracted softmax over the last axis.
Var softmax_lastaxis(Var x);

struct MaxPoolResult {
  Var out;
  /// Flat index (into the input) of the selected element for every output slot.
  std::vector<std::size_t> argmax;
};

/// Maximum along `axis`; ties go to the lowest index along that axis.
MaxPoolResult maxpool_axis(Var x, std::size_t axis);
Var avgpool_axis(Var x, std::size_t axis);

/// x[rows x Cin] * W[Cin x Cout] (+ b[Cout]). Rank-1 x is treated as one row.
Var linear(Var x, Var weight, std::optional<Var> bias = std::nullopt);

Var concat_lastaxis(std::span<const Var> parts);

/// out[j, k, :] = x[indices[j * K + k], :], with out shape lead_shape + {C}.
Var gather_rows(Var x, std::span<const std::size_t> indices, const Shape& lead_shape);

/// -log softmax(logits)[target] for rank-1 logits, in log-sum-exp form.
Var cross_entropy_from_logits(Var logits, std::size_t target);

/// Mean over rows of the per-row cross-entropy of logits[N x C].
Var mean_cross_entropy_rows(Var logits, std::span<const std::size_t> targets);

// ---------------------------------------------------------------------------
// Optimisation.

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState zeros_like(std::span<const Parameter> params);
};

/// One bias-corrected Adam update; increments state.step.
void adam_step(std::span<Parameter> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& config = {});

/// 0.5 * lr0 * (1 + cos(pi * step / total_steps)).
double cosine_annealing_lr(std::int64_t step, std::int64_t total_steps, double lr0);

}  // namespace yogo
