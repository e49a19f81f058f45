// Copyright (c) 2026 The YOGO-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#include "yogo/autodiff.hpp"

#include <algorithm>
#include <cstring>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace yogo {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  if (shape_.size() > 4) throw std::invalid_argument("tensor rank exceeds 4: " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 4) throw std::invalid_argument("tensor rank exceeds 4: " + shape_to_string(shape_));
  if (shape_size(shape_) != data_.size()) {
    throw std::invalid_argument("tensor shape " + shape_to_string(shape_) + " does not match " +
                                std::to_string(data_.size()) + " values");
  }
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

bool Tensor::operator==(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::equal(data_.begin(), data_.end(), other.data_.begin(), [](double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
  });
}

const Tensor& Var::value() const { return tape_->value(id_); }

// ---------------------------------------------------------------------------

Var Tape::add_leaf(std::string_view op, Tensor value, bool requires_grad) {
  Node& node = nodes_.emplace_back();
  node.op = op;
  node.storage = std::move(value);
  node.value = &node.storage;
  node.requires_grad = requires_grad && record_;
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return add_leaf("constant", std::move(value), false); }

Var Tape::variable(Tensor value) { return add_leaf("variable", std::move(value), true); }

Var Tape::parameter(const Parameter& param, std::size_t slot) {
  Node& node = nodes_.emplace_back();
  node.op = "parameter";
  node.value = &param.value;
  node.requires_grad = record_;
  node.param_slot = slot;
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(std::string_view op, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
#ifdef YOGO_CHECK_FINITE
  for (double x : value.data()) {
    if (!std::isfinite(x)) throw std::domain_error("non-finite value produced by " + std::string(op));
  }
#endif
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::logic_error(std::string(op) + ": operand from a different tape");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  Node& node = nodes_.emplace_back();
  node.op = op;
  node.storage = std::move(value);
  node.value = &node.storage;
  node.requires_grad = needs && record_;
  if (node.requires_grad) node.backward = std::move(backward);
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value->shape() || node.grad.size() != node.value->size()) {
    node.grad = Tensor(node.value->shape(), 0.0);
  }
  return node.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id());
  if (node.grad.size() == node.value->size() && node.grad.shape() == node.value->shape()) return node.grad;
  return Tensor(node.value->shape(), 0.0);
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::logic_error("backward: root from a different tape");
  if (!record_) throw std::logic_error("backward on a tape that does not record gradients");
  if (value(root.id()).size() != 1) {
    throw std::invalid_argument("backward root must be a scalar, got " + shape_to_string(root.shape()));
  }
  grad_buffer(root.id())[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.size() == 0) continue;
    node.backward(*this, node.grad, *node.value);
  }
}

void Tape::accumulate_parameter_grads(std::span<Tensor> out) const {
  for (const Node& node : nodes_) {
    if (!node.param_slot || node.grad.size() == 0) continue;
    Tensor& dst = out[*node.param_slot];
    if (dst.shape() != node.grad.shape()) {
      throw std::invalid_argument("gradient slot shape mismatch for parameter");
    }
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += node.grad[k];
  }
}

Var ParameterBinding::operator()(std::size_t slot) {
  if (slot >= store_.size()) throw std::out_of_range("parameter slot " + std::to_string(slot) + " out of range");
  if (!bound_[slot]) bound_[slot] = tape_->parameter(store_[slot], slot);
  return *bound_[slot];
}

// ---------------------------------------------------------------------------

namespace {

struct AxisSplit {
  std::size_t outer;
  std::size_t extent;
  std::size_t inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, std::string_view op) {
  if (axis >= shape.size()) {
    throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                                shape_to_string(shape));
  }
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  if (s.extent == 0) throw std::invalid_argument(std::string(op) + ": empty axis in " + shape_to_string(shape));
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != axis) out.push_back(shape[i]);
  }
  return out;
}

void require_rank2(const Tensor& t, std::string_view op, std::string_view what) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": " + std::string(what) + " must be 2-D, got " +
                                shape_to_string(t.shape()));
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_rank2(A, "matmul", "lhs");
  require_rank2(B, "matmul", "rhs");
  const std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(1);
  if (B.extent(0) != k) {
    throw std::invalid_argument("matmul: shape mismatch " + shape_to_string(A.shape()) + " x " +
                                shape_to_string(B.shape()));
  }
  Tensor C({m, n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B.data()[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push("matmul", std::move(C), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& A = t.value(ia);
    const Tensor& B = t.value(ib);
    if (t.requires_grad(ia)) {
      // dA = dC * B^T
      Tensor& gA = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g.data()[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B.data()[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gA[i * k + p] += acc;
        }
      }
    }
    if (t.requires_grad(ib)) {
      // dB = A^T * dC
      Tensor& gB = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = &g.data()[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* gbrow = &gB[p * n];
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Var transpose(Var x) {
  const Tensor& X = x.value();
  require_rank2(X, "transpose", "input");
  const std::size_t r = X.extent(0), c = X.extent(1);
  Tensor Y({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) Y[j * r + i] = X[i * c + j];
  }
  const std::size_t ix = x.id();
  return x.tape()->push("transpose", std::move(Y), {x}, [ix, r, c](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Tensor Y(std::move(shape), x.value().values());
  const std::size_t ix = x.id();
  return x.tape()->push("reshape", std::move(Y), {x}, [ix](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var add(Var x, Var y) {
  const Tensor& X = x.value();
  const Tensor& Y = y.value();
  if (X.shape() != Y.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_to_string(X.shape()) + " vs " +
                                shape_to_string(Y.shape()));
  }
  Tensor Z = X;
  for (std::size_t i = 0; i < Z.size(); ++i) Z[i] += Y[i];
  const std::size_t ix = x.id(), iy = y.id();
  return x.tape()->push("add", std::move(Z), {x, y}, [ix, iy](Tape& t, const Tensor& g, const Tensor&) {
    for (std::size_t id : {ix, iy}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor Y = x.value();
  for (double& v : Y.data()) v *= factor;
  const std::size_t ix = x.id();
  return x.tape()->push("scale", std::move(Y), {x}, [ix, factor](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
  });
}

Var relu(Var x) {
  Tensor Y = x.value();
  for (double& v : Y.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ix = x.id();
  return x.tape()->push("relu", std::move(Y), {x}, [ix](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& X = t.value(ix);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (X[i] > 0.0) gx[i] += g[i];
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const std::size_t ix = x.id();
  return x.tape()->push("sum", Tensor::scalar(acc), {x}, [ix](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (double& v : gx.data()) v += g[0];
  });
}

Var softmax_lastaxis(Var x) {
  const Tensor& X = x.value();
  if (X.rank() == 0) throw std::invalid_argument("softmax_lastaxis: scalar input");
  const std::size_t n = X.shape().back();
  if (n == 0) throw std::invalid_argument("softmax_lastaxis: empty last axis");
  const std::size_t rows = X.size() / n;
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X.data()[r * n];
    double* yr = &Y[r * n];
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  const std::size_t ix = x.id();
  return x.tape()->push("softmax", std::move(Y), {x}, [ix, n, rows](Tape& t, const Tensor& g, const Tensor& y) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = &y.data()[r * n];
      const double* gr = &g.data()[r * n];
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
      for (std::size_t j = 0; j < n; ++j) gx[r * n + j] += yr[j] * (gr[j] - dot);
    }
  });
}

MaxPoolResult maxpool_axis(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "maxpool_axis");
  Tensor Y(drop_axis(X.shape(), axis));
  std::vector<std::size_t> arg(Y.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = o * s.extent * s.inner + i;
      for (std::size_t e = 1; e < s.extent; ++e) {
        const std::size_t idx = (o * s.extent + e) * s.inner + i;
        if (X[idx] > X[best]) best = idx;  // strict: lowest index wins ties
      }
      Y[o * s.inner + i] = X[best];
      arg[o * s.inner + i] = best;
    }
  }
  const std::size_t ix = x.id();
  Var out = x.tape()->push("maxpool", std::move(Y), {x}, [ix, arg](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += g[k];
  });
  return {out, std::move(arg)};
}

Var avgpool_axis(Var x, std::size_t axis) {
  const Tensor& X = x.value();
  const AxisSplit s = split_axis(X.shape(), axis, "avgpool_axis");
  Tensor Y(drop_axis(X.shape(), axis));
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      double acc = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) acc += X[(o * s.extent + e) * s.inner + i];
      Y[o * s.inner + i] = acc * inv;
    }
  }
  const std::size_t ix = x.id();
  return x.tape()->push("avgpool", std::move(Y), {x}, [ix, s, inv](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t e = 0; e < s.extent; ++e) {
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.extent + e) * s.inner + i] += g[o * s.inner + i] * inv;
      }
    }
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require_rank2(W, "linear", "weight");
  if (X.rank() != 1 && X.rank() != 2) {
    throw std::invalid_argument("linear: input must be 1-D or 2-D, got " + shape_to_string(X.shape()));
  }
  const std::size_t cin = W.extent(0), cout = W.extent(1);
  const std::size_t rows = X.rank() == 1 ? 1 : X.extent(0);
  if (X.shape().back() != cin) {
    throw std::invalid_argument("linear: input " + shape_to_string(X.shape()) + " incompatible with weight " +
                                shape_to_string(W.shape()));
  }
  if (bias && (bias->value().rank() != 1 || bias->value().extent(0) != cout)) {
    throw std::invalid_argument("linear: bias " + shape_to_string(bias->shape()) + " incompatible with weight " +
                                shape_to_string(W.shape()));
  }
  Tensor Y(X.rank() == 1 ? Shape{cout} : Shape{rows, cout}, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = &Y[r * cout];
    if (bias) {
      const Tensor& B = bias->value();
      for (std::size_t j = 0; j < cout; ++j) yr[j] = B[j];
    }
    for (std::size_t p = 0; p < cin; ++p) {
      const double xv = X[r * cin + p];
      const double* wrow = &W.data()[p * cout];
      for (std::size_t j = 0; j < cout; ++j) yr[j] += xv * wrow[j];
    }
  }
  const std::size_t ix = x.id(), iw = weight.id();
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  auto rule = [ix, iw, ib, rows, cin, cout](Tape& t, const Tensor& g, const Tensor&) {
    const Tensor& X = t.value(ix);
    const Tensor& W = t.value(iw);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_buffer(ix);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = &g.data()[r * cout];
        for (std::size_t p = 0; p < cin; ++p) {
          const double* wrow = &W.data()[p * cout];
          double acc = 0.0;
          for (std::size_t j = 0; j < cout; ++j) acc += gr[j] * wrow[j];
          gx[r * cin + p] += acc;
        }
      }
    }
    if (t.requires_grad(iw)) {
      Tensor& gw = t.grad_buffer(iw);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = &g.data()[r * cout];
        for (std::size_t p = 0; p < cin; ++p) {
          const double xv = X[r * cin + p];
          double* gwrow = &gw[p * cout];
          for (std::size_t j = 0; j < cout; ++j) gwrow[j] += xv * gr[j];
        }
      }
    }
    if (ib && t.requires_grad(*ib)) {
      Tensor& gb = t.grad_buffer(*ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cout; ++j) gb[j] += g[r * cout + j];
      }
    }
  };
  if (bias) return x.tape()->push("linear", std::move(Y), {x, weight, *bias}, rule);
  return x.tape()->push("linear", std::move(Y), {x, weight}, rule);
}

Var concat_lastaxis(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_lastaxis: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw std::invalid_argument("concat_lastaxis: scalar input");
  const std::size_t rows = parts[0].value().size() / first.back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& sh = p.shape();
    if (sh.size() != first.size() || !std::equal(sh.begin(), sh.end() - 1, first.begin())) {
      throw std::invalid_argument("concat_lastaxis: leading shape mismatch " + shape_to_string(first) + " vs " +
                                  shape_to_string(sh));
    }
    widths.push_back(sh.back());
    total += sh.back();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor Y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& P = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&P.data()[r * widths[k]], widths[k], &Y[r * total + offset]);
    }
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  Tape* tape = parts[0].tape();
  auto rule = [ids, widths, rows, total](Tape& t, const Tensor& g, const Tensor&) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gp = t.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) gp[r * widths[k] + c] += g[r * total + off + c];
        }
      }
      off += widths[k];
    }
  };
  return tape->push("concat", std::move(Y), parts, rule);
}

Var gather_rows(Var x, std::span<const std::size_t> indices, const Shape& lead_shape) {
  const Tensor& X = x.value();
  require_rank2(X, "gather_rows", "source");
  const std::size_t n = X.extent(0), c = X.extent(1);
  if (shape_size(lead_shape) != indices.size()) {
    throw std::invalid_argument("gather_rows: " + std::to_string(indices.size()) + " indices do not fill " +
                                shape_to_string(lead_shape));
  }
  Shape out_shape = lead_shape;
  out_shape.push_back(c);
  Tensor Y(out_shape);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= n) {
      throw std::out_of_range("gather_rows: index " + std::to_string(indices[k]) + " >= " + std::to_string(n));
    }
    std::copy_n(&X.data()[indices[k] * c], c, &Y[k * c]);
  }
  const std::size_t ix = x.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return x.tape()->push("gather", std::move(Y), {x}, [ix, idx = std::move(idx), c](Tape& t, const Tensor& g, const Tensor&) {
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (std::size_t j = 0; j < c; ++j) gx[idx[k] * c + j] += g[k * c + j];
    }
  });
}

namespace {

// Writes softmax(row) into probs and returns log-sum-exp.
double softmax_row(const double* row, std::size_t n, double* probs) {
  const double mx = *std::max_element(row, row + n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    probs[j] = std::exp(row[j] - mx);
    z += probs[j];
  }
  for (std::size_t j = 0; j < n; ++j) probs[j] /= z;
  return mx + std::log(z);
}

}  // namespace

Var cross_entropy_from_logits(Var logits, std::size_t target) {
  const Tensor& Z = logits.value();
  if (Z.rank() != 1 || Z.size() == 0) {
    throw std::invalid_argument("cross_entropy_from_logits: logits must be non-empty 1-D, got " +
                                shape_to_string(Z.shape()));
  }
  const std::size_t n = Z.size();
  if (target >= n) {
    throw std::out_of_range("cross_entropy_from_logits: target " + std::to_string(target) + " >= class count " +
                            std::to_string(n));
  }
  std::vector<double> probs(n);
  const double lse = softmax_row(Z.data().data(), n, probs.data());
  const std::size_t iz = logits.id();
  return logits.tape()->push("cross_entropy", Tensor::scalar(lse - Z[target]), {logits},
                             [iz, target, probs = std::move(probs)](Tape& t, const Tensor& g, const Tensor&) {
                               Tensor& gz = t.grad_buffer(iz);
                               for (std::size_t j = 0; j < probs.size(); ++j) {
                                 gz[j] += g[0] * (probs[j] - (j == target ? 1.0 : 0.0));
                               }
                             });
}

Var mean_cross_entropy_rows(Var logits, std::span<const std::size_t> targets) {
  const Tensor& Z = logits.value();
  require_rank2(Z, "mean_cross_entropy_rows", "logits");
  const std::size_t rows = Z.extent(0), n = Z.extent(1);
  if (targets.size() != rows) {
    throw std::invalid_argument("mean_cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(rows) + " rows");
  }
  if (rows == 0 || n == 0) throw std::invalid_argument("mean_cross_entropy_rows: empty logits");
  std::vector<double> probs(rows * n);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= n) {
      throw std::out_of_range("mean_cross_entropy_rows: target " + std::to_string(targets[r]) + " at row " +
                              std::to_string(r) + " >= class count " + std::to_string(n));
    }
    const double lse = softmax_row(&Z.data()[r * n], n, &probs[r * n]);
    total += lse - Z[r * n + targets[r]];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  const std::size_t iz = logits.id();
  std::vector<std::size_t> tg(targets.begin(), targets.end());
  return logits.tape()->push(
      "mean_cross_entropy", Tensor::scalar(total * inv), {logits},
      [iz, n, inv, tg = std::move(tg), probs = std::move(probs)](Tape& t, const Tensor& g, const Tensor&) {
        Tensor& gz = t.grad_buffer(iz);
        const double s = g[0] * inv;
        for (std::size_t r = 0; r < tg.size(); ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            gz[r * n + j] += s * (probs[r * n + j] - (j == tg[r] ? 1.0 : 0.0));
          }
        }
      });
}

// ---------------------------------------------------------------------------

AdamState AdamState::zeros_like(std::span<const Parameter> params) {
  AdamState s;
  for (const Parameter& p : params) {
    s.m.emplace_back(p.value.shape(), 0.0);
    s.v.emplace_back(p.value.shape(), 0.0);
  }
  return s;
}

void adam_step(std::span<Parameter> params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state counts disagree");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k].value;
    const Tensor& g = grads[k];
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (g.shape() != p.shape() || m.shape() != p.shape() || v.shape() != p.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter " + params[k].name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

double cosine_annealing_lr(std::int64_t step, std::int64_t total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace yogo
