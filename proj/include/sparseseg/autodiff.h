/* Copyright 2026 The sparseseg Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef SPARSESEG_AUTODIFF_H_
#define SPARSESEG_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparseseg/tensor.h"

namespace sparseseg {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid for the
// lifetime of its tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Adjoint rule of one recorded operation. `input_grads[i]` is null when
// input i does not require a gradient; otherwise the rule must add its
// contribution into it.
using BackwardFn =
    std::function<void(const Tensor& out_value, const Tensor& out_grad,
                       std::span<Tensor* const> input_grads)>;

// Records operations in execution order; Backward() sweeps the record in
// reverse. Nodes live in a deque so references to values stay valid while
// the tape grows.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that receives a gradient.
  Var Variable(Tensor value);
  // Leaf that never receives a gradient.
  Var Constant(Tensor value);
  // Records the result of an operation. The backward rule is dropped when
  // no input requires a gradient.
  Var Record(std::string_view op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  // Reverse sweep seeded with d(root)/d(root) = 1. Clears gradients from a
  // previous sweep first. Throws UsageError when root is not scalar.
  void Backward(Var root);

  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }
  // Gradient accumulated by the last Backward(); zeros when the node was not
  // reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  const std::string& op(Var v) const { return nodes_.at(v.id_).op; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::deque<Node> nodes_;
};

// Differentiable primitives. All inputs must live on the same tape.
namespace ad {

Var MatMul(Var a, Var b);
// a · bᵀ
Var MatMulTransB(Var a, Var b);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var x, double factor);
// x[M×N] + b[N] broadcast over rows.
Var AddRowVector(Var x, Var b);
// x·Φ(x) with the exact normal CDF.
Var Gelu(Var x);
Var SoftmaxRows(Var x);
Var Abs(Var x);
Var Square(Var x);
// log(max(x, floor)); the gradient is zero where x < floor.
Var LogFloor(Var x, double floor);
Var Sum(Var x);
Var Mean(Var x);
// Same values, new shape.
Var Reshape(Var x, Shape shape);
// Horizontal concatenation of 2-D tensors with equal row counts.
Var ConcatCols(std::span<const Var> parts);
// x is an (h·w)×D token grid; see sparseseg::MeanPoolGrid.
Var MeanPoolGrid(Var x, std::size_t h, std::size_t w, std::size_t factor);
// x is an (h·w)×C token grid resampled to (out_h·out_w)×C.
Var BilinearResizeGrid(Var x, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w);
// Mean over rows with labels[r] != ignore of −log softmax(logits)[r, label].
// Zero when every row is ignored. Throws ValidationError on label >= C.
Var SoftmaxCrossEntropy(Var logits, std::span<const std::uint8_t> labels,
                        std::uint8_t ignore);

}  // namespace ad

double GeluValue(double x);
double GeluDerivative(double x);

// Named parameter tensors. std::map keeps iteration order deterministic.
using ParameterMap = std::map<std::string, Tensor>;
using GradientMap = std::map<std::string, Tensor>;
using VarMap = std::map<std::string, Var>;

// Registers every parameter as a Variable on `tape`.
VarMap BindParameters(Tape& tape, const ParameterMap& params);
GradientMap CollectGradients(const Tape& tape, const VarMap& vars);

// Symmetric relative error used by the gradient checker:
// |a − f| / (|a| + |f| + 1e-8).
double RelativeGradientError(double analytic, double numeric);

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t num_samples = 200;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradCheckEntry> entries;
  // Group = parameter name up to its last '.'.
  std::map<std::string, double> group_max;
};

// Evaluates the loss and, when `grads` is non-null, fills the analytic
// gradient of every parameter.
using LossAndGradFn =
    std::function<double(const ParameterMap& params, GradientMap* grads)>;

// Loss value only, possibly at higher precision than the tape.
using LossValueFn = std::function<long double(const ParameterMap& params)>;

// Central-difference check on a random subsample of at least
// options.num_samples coordinates, with every parameter tensor represented.
// The two-argument form differentiates `value` numerically and compares it
// with the gradient reported by `analytic`.
GradCheckReport FiniteDiffCheck(const LossAndGradFn& fn,
                                const ParameterMap& params,
                                const GradCheckOptions& options);
GradCheckReport FiniteDiffCheck(const LossAndGradFn& analytic,
                                const LossValueFn& value,
                                const ParameterMap& params,
                                const GradCheckOptions& options);

std::string ParameterGroup(const std::string& name);

}  // namespace sparseseg

#endif  // SPARSESEG_AUTODIFF_H_
