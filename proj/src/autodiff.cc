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
#include "sparseseg/autodiff.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sparseseg/errors.h"
#include "sparseseg/rng.h"

namespace sparseseg {

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(*this); }

Var Tape::Variable(Tensor value) {
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(std::string_view op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape_ != this) {
      throw UsageError(node.op + ": input recorded on a different tape");
    }
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::Backward(Var root) {
  if (root.tape_ != this) throw UsageError("backward: root from another tape");
  Node& root_node = nodes_.at(root.id_);
  if (root_node.value.size() != 1) {
    throw UsageError("backward: root must be scalar, got shape " +
                     ShapeToString(root_node.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  root_node.grad = Tensor(root_node.value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor(src.value.shape());
      input_grads.push_back(&src.grad);
    }
    node.backward(node.value, node.grad, input_grads);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_.at(v.id_);
  if (node.grad.empty()) return Tensor(node.value.shape());
  return node.grad;
}

namespace {

Tape& SameTape(std::initializer_list<Var> vars) {
  Tape* tape = vars.begin()->tape();
  if (!tape) throw UsageError("operation on an unbound Var");
  for (const Var& v : vars) {
    if (v.tape() != tape) throw UsageError("operands live on different tapes");
  }
  return *tape;
}

void AddInto(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void RequireSameShape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " +
                         ShapeToString(a.shape()) + " and " +
                         ShapeToString(b.shape()) + " differ");
  }
}

template <typename F>
Tensor MapValues(const Tensor& x, F f, std::string_view op) {
  Tensor y(x.shape());
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  CheckFinite(y, op);
  return y;
}

// Elementwise unary op whose derivative depends only on the input value.
template <typename F, typename DF>
Var Unary(Var x, std::string_view op, F f, DF df) {
  Tape& tape = SameTape({x});
  return tape.Record(op, MapValues(x.value(), f, op), {x},
                     [x, df](const Tensor&, const Tensor& g,
                             std::span<Tensor* const> grads) {
                       if (!grads[0]) return;
                       auto xs = x.value().data();
                       auto gs = g.data();
                       auto out = grads[0]->data();
                       for (std::size_t i = 0; i < xs.size(); ++i) {
                         out[i] += gs[i] * df(xs[i]);
                       }
                     });
}

}  // namespace

double GeluValue(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

namespace ad {

Var MatMul(Var a, Var b) {
  Tape& tape = SameTape({a, b});
  return tape.Record(
      "matmul", sparseseg::MatMul(a.value(), b.value()), {a, b},
      [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) AddInto(grads[0], MatMulTransB(g, b.value()));
        if (grads[1]) AddInto(grads[1], MatMulTransA(a.value(), g));
      });
}

Var MatMulTransB(Var a, Var b) {
  Tape& tape = SameTape({a, b});
  return tape.Record(
      "matmul_trans_b", sparseseg::MatMulTransB(a.value(), b.value()), {a, b},
      [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (grads[0]) AddInto(grads[0], sparseseg::MatMul(g, b.value()));
        if (grads[1]) AddInto(grads[1], MatMulTransA(g, a.value()));
      });
}

Var Add(Var a, Var b) {
  Tape& tape = SameTape({a, b});
  RequireSameShape(a.value(), b.value(), "add");
  Tensor out = a.value();
  AddInto(&out, b.value());
  CheckFinite(out, "add");
  return tape.Record("add", std::move(out), {a, b},
                     [](const Tensor&, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       AddInto(grads[0], g);
                       AddInto(grads[1], g);
                     });
}

Var Sub(Var a, Var b) {
  Tape& tape = SameTape({a, b});
  RequireSameShape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bs = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bs[i];
  CheckFinite(out, "sub");
  return tape.Record("sub", std::move(out), {a, b},
                     [](const Tensor&, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       AddInto(grads[0], g);
                       if (grads[1]) {
                         auto d = grads[1]->data();
                         auto gs = g.data();
                         for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gs[i];
                       }
                     });
}

Var Mul(Var a, Var b) {
  Tape& tape = SameTape({a, b});
  RequireSameShape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bs = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bs[i];
  CheckFinite(out, "mul");
  return tape.Record(
      "mul", std::move(out), {a, b},
      [a, b](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        auto gs = g.data();
        if (grads[0]) {
          auto d = grads[0]->data();
          auto bv = b.value().data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * bv[i];
        }
        if (grads[1]) {
          auto d = grads[1]->data();
          auto av = a.value().data();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i] * av[i];
        }
      });
}

Var Scale(Var x, double factor) {
  Tape& tape = SameTape({x});
  return tape.Record(
      "scale",
      MapValues(x.value(), [factor](double v) { return factor * v; }, "scale"),
      {x},
      [factor](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        auto d = grads[0]->data();
        auto gs = g.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * gs[i];
      });
}

Var AddRowVector(Var x, Var b) {
  Tape& tape = SameTape({x, b});
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || bv.size() != xv.cols()) {
    throw DimensionError("add_row_vector: " + ShapeToString(xv.shape()) +
                         " + " + ShapeToString(bv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  }
  CheckFinite(out, "add_row_vector");
  return tape.Record("add_row_vector", std::move(out), {x, b},
                     [](const Tensor&, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       AddInto(grads[0], g);
                       if (grads[1]) {
                         Tensor& gb = *grads[1];
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           for (std::size_t c = 0; c < g.cols(); ++c) {
                             gb[c] += g(r, c);
                           }
                         }
                       }
                     });
}

Var Gelu(Var x) { return Unary(x, "gelu", GeluValue, GeluDerivative); }

Var SoftmaxRows(Var x) {
  Tape& tape = SameTape({x});
  return tape.Record("softmax_rows", sparseseg::SoftmaxRows(x.value()), {x},
                     [](const Tensor& y, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       if (grads[0]) AddInto(grads[0], SoftmaxRowsBackward(y, g));
                     });
}

Var Abs(Var x) {
  return Unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Var Square(Var x) {
  return Unary(
      x, "square", [](double v) { return v * v; },
      [](double v) { return 2.0 * v; });
}

Var LogFloor(Var x, double floor) {
  return Unary(
      x, "log_floor", [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v) { return v < floor ? 0.0 : 1.0 / v; });
}

Var Sum(Var x) {
  Tape& tape = SameTape({x});
  const auto xs = x.value().data();
  const double total = std::accumulate(xs.begin(), xs.end(), 0.0);
  Tensor out = Tensor::Scalar(total);
  CheckFinite(out, "sum");
  return tape.Record("sum", std::move(out), {x},
                     [](const Tensor&, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       if (!grads[0]) return;
                       const double gv = g[0];
                       for (double& v : grads[0]->data()) v += gv;
                     });
}

Var Mean(Var x) {
  return Scale(Sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var Reshape(Var x, Shape shape) {
  Tape& tape = SameTape({x});
  return tape.Record("reshape", x.value().Reshaped(std::move(shape)), {x},
                     [](const Tensor&, const Tensor& g,
                        std::span<Tensor* const> grads) {
                       if (!grads[0]) return;
                       auto d = grads[0]->data();
                       auto gs = g.data();
                       for (std::size_t i = 0; i < d.size(); ++i) d[i] += gs[i];
                     });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape* tape = parts.front().tape();
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != tape) throw UsageError("concat_cols: mixed tapes");
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.rows() != rows) {
      throw DimensionError("concat_cols: part " + ShapeToString(v.shape()) +
                           " does not have " + std::to_string(rows) + " rows");
    }
    offsets.push_back(total);
    total += v.cols();
  }
  Tensor out({rows, total});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(&v.data()[r * v.cols()], v.cols(),
                  &out.data()[r * total + offsets[k]]);
    }
  }
  return tape->Record(
      "concat_cols", std::move(out), std::vector<Var>(parts.begin(), parts.end()),
      [offsets](const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        const std::size_t total_cols = g.cols();
        for (std::size_t k = 0; k < grads.size(); ++k) {
          if (!grads[k]) continue;
          Tensor& gk = *grads[k];
          for (std::size_t r = 0; r < gk.rows(); ++r) {
            for (std::size_t c = 0; c < gk.cols(); ++c) {
              gk(r, c) += g.data()[r * total_cols + offsets[k] + c];
            }
          }
        }
      });
}

Var MeanPoolGrid(Var x, std::size_t h, std::size_t w, std::size_t factor) {
  Tape& tape = SameTape({x});
  return tape.Record("mean_pool_grid",
                     sparseseg::MeanPoolGrid(x.value(), h, w, factor), {x},
                     [h, w, factor](const Tensor&, const Tensor& g,
                                    std::span<Tensor* const> grads) {
                       if (grads[0]) {
                         AddInto(grads[0], MeanPoolGridBackward(g, h, w, factor));
                       }
                     });
}

Var BilinearResizeGrid(Var x, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w) {
  Tape& tape = SameTape({x});
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() != h * w) {
    throw DimensionError("bilinear_resize_grid: " + ShapeToString(xv.shape()) +
                         " is not a " + std::to_string(h) + "x" +
                         std::to_string(w) + " grid");
  }
  const std::size_t ch = xv.cols();
  Tensor out = BilinearResize(xv.Reshaped({h, w, ch}), out_h, out_w)
                   .Reshaped({out_h * out_w, ch});
  return tape.Record(
      "bilinear_resize", std::move(out), {x},
      [h, w, out_h, out_w, ch](const Tensor&, const Tensor& g,
                               std::span<Tensor* const> grads) {
        if (!grads[0]) return;
        AddInto(grads[0],
                BilinearResizeBackward(g.Reshaped({out_h, out_w, ch}), h, w)
                    .Reshaped({h * w, ch}));
      });
}

Var SoftmaxCrossEntropy(Var logits, std::span<const std::uint8_t> labels,
                        std::uint8_t ignore) {
  Tape& tape = SameTape({logits});
  const Tensor& z = logits.value();
  if (z.rank() != 2 || labels.size() != z.rows()) {
    throw DimensionError("softmax_cross_entropy: logits " +
                         ShapeToString(z.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t classes = z.cols();
  std::size_t count = 0;
  for (std::uint8_t l : labels) {
    if (l == ignore) continue;
    if (l >= classes) {
      throw ValidationError("label " + std::to_string(l) + " >= class count " +
                            std::to_string(classes));
    }
    ++count;
  }
  const Tensor probs = sparseseg::SoftmaxRows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] == ignore) continue;
    const double* row = &z.data()[r * classes];
    const double mx = *std::max_element(row, row + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(row[c] - mx);
    loss += (mx + std::log(s)) - row[labels[r]];
  }
  if (count > 0) loss /= static_cast<double>(count);
  std::vector<std::uint8_t> kept(labels.begin(), labels.end());
  return tape.Record(
      "softmax_cross_entropy", Tensor::Scalar(loss), {logits},
      [probs, kept = std::move(kept), count, ignore](
          const Tensor&, const Tensor& g, std::span<Tensor* const> grads) {
        if (!grads[0] || count == 0) return;
        const double scale = g[0] / static_cast<double>(count);
        Tensor& gz = *grads[0];
        for (std::size_t r = 0; r < gz.rows(); ++r) {
          if (kept[r] == ignore) continue;
          for (std::size_t c = 0; c < gz.cols(); ++c) {
            const double target = (c == kept[r]) ? 1.0 : 0.0;
            gz(r, c) += scale * (probs(r, c) - target);
          }
        }
      });
}

}  // namespace ad

VarMap BindParameters(Tape& tape, const ParameterMap& params) {
  VarMap vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.Variable(value));
  return vars;
}

GradientMap CollectGradients(const Tape& tape, const VarMap& vars) {
  GradientMap grads;
  for (const auto& [name, var] : vars) grads.emplace(name, tape.grad(var));
  return grads;
}

double RelativeGradientError(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         (std::abs(analytic) + std::abs(numeric) + 1e-8);
}

std::string ParameterGroup(const std::string& name) {
  const auto pos = name.rfind('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

GradCheckReport FiniteDiffCheck(const LossAndGradFn& fn,
                                const ParameterMap& params,
                                const GradCheckOptions& options) {
  return FiniteDiffCheck(
      fn, [&fn](const ParameterMap& p) -> long double { return fn(p, nullptr); },
      params, options);
}

GradCheckReport FiniteDiffCheck(const LossAndGradFn& fn,
                                const LossValueFn& value_fn,
                                const ParameterMap& params,
                                const GradCheckOptions& options) {
  GradientMap analytic;
  fn(params, &analytic);

  GradCheckReport report;
  if (params.empty()) return report;
  Rng rng(options.seed);
  const std::size_t per_tensor = std::max<std::size_t>(
      1, (options.num_samples + params.size() - 1) / params.size());

  ParameterMap probe = params;
  for (const auto& [name, value] : params) {
    const auto it = analytic.find(name);
    if (it == analytic.end()) {
      throw UsageError("gradcheck: no analytic gradient for " + name);
    }
    // Distinct coordinates: partial Fisher-Yates over the index range.
    std::vector<std::size_t> indices(value.size());
    std::iota(indices.begin(), indices.end(), 0);
    const std::size_t take = std::min(per_tensor, indices.size());
    for (std::size_t k = 0; k < take; ++k) {
      std::swap(indices[k], indices[k + rng.UniformInt(indices.size() - k)]);
    }
    Tensor& slot = probe.at(name);
    for (std::size_t k = 0; k < take; ++k) {
      const std::size_t idx = indices[k];
      const double original = slot[idx];
      const double up = original + options.epsilon;
      const double down = original - options.epsilon;
      slot[idx] = up;
      const long double plus = value_fn(probe);
      slot[idx] = down;
      const long double minus = value_fn(probe);
      slot[idx] = original;
      GradCheckEntry entry;
      entry.name = name;
      entry.index = idx;
      entry.analytic = it->second[idx];
      // Divide by the step actually taken after rounding.
      entry.numeric = static_cast<double>((plus - minus) /
                                          static_cast<long double>(up - down));
      entry.rel_error = RelativeGradientError(entry.analytic, entry.numeric);
      report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
      double& group = report.group_max[ParameterGroup(name)];
      group = std::max(group, entry.rel_error);
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace sparseseg
