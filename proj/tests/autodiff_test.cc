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

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>
#include "sparseseg/errors.h"
#include "test_util.h"

namespace sparseseg {
namespace {

using testing_util::RandomTensor;
using OpFn = std::function<Var(std::span<const Var>)>;

// Projects op(inputs) on a fixed random direction and compares the tape
// gradient with central differences on every input coordinate.
double MaxOpGradError(const OpFn& op, std::vector<Tensor> inputs,
                      std::uint64_t seed = 1) {
  Tensor direction;
  auto loss = [&](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : xs) vars.push_back(tape.Variable(x));
    Var out = op(vars);
    if (direction.empty()) direction = RandomTensor(out.value().shape(), seed);
    Var l = ad::Sum(ad::Mul(out, tape.Constant(direction)));
    if (grads) {
      tape.Backward(l);
      for (const Var& v : vars) grads->push_back(tape.grad(v));
    }
    return l.value().item();
  };
  std::vector<Tensor> analytic;
  loss(inputs, &analytic);
  double worst = 0.0;
  // Smaller steps drown saturated softmax entries in rounding noise.
  const double eps = 1e-4;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + eps;
      const double plus = loss(inputs, nullptr);
      inputs[k][i] = orig - eps;
      const double minus = loss(inputs, nullptr);
      inputs[k][i] = orig;
      const double numeric = (plus - minus) / (2 * eps);
      worst = std::max(worst, RelativeGradientError(analytic[k][i], numeric));
    }
  }
  return worst;
}

constexpr double kPrimitiveTol = 1e-6;

TEST(AutodiffTest, MatMulGradients) {
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::MatMul(v[0], v[1]); },
                           {RandomTensor({3, 4}, 1), RandomTensor({4, 2}, 2)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::MatMulTransB(v[0], v[1]); },
                           {RandomTensor({3, 4}, 3), RandomTensor({5, 4}, 4)}),
            kPrimitiveTol);
}

TEST(AutodiffTest, ElementwiseGradients) {
  const Tensor a = RandomTensor({3, 3}, 5), b = RandomTensor({3, 3}, 6);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Add(v[0], v[1]); }, {a, b}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Sub(v[0], v[1]); }, {a, b}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Mul(v[0], v[1]); }, {a, b}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Scale(v[0], -2.5); }, {a}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Gelu(v[0]); }, {a}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Abs(v[0]); }, {a}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Square(v[0]); }, {a}),
            kPrimitiveTol);
  Tensor positive = a;
  for (double& x : positive.data()) x = std::abs(x) + 0.1;
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::LogFloor(v[0], 1e-12); },
                           {positive}),
            kPrimitiveTol);
}

TEST(AutodiffTest, RowAndReductionGradients) {
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::AddRowVector(v[0], v[1]); },
                           {RandomTensor({4, 3}, 7), RandomTensor({3}, 8)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::SoftmaxRows(v[0]); },
                           {RandomTensor({4, 5}, 9, 3.0)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Mean(v[0]); },
                           {RandomTensor({4, 5}, 10)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::Reshape(v[0], {2, 10}); },
                           {RandomTensor({4, 5}, 11)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::ConcatCols(v); },
                           {RandomTensor({3, 2}, 12), RandomTensor({3, 4}, 13)}),
            kPrimitiveTol);
}

TEST(AutodiffTest, GridOpGradients) {
  EXPECT_LT(MaxOpGradError([](auto v) { return ad::MeanPoolGrid(v[0], 4, 4, 2); },
                           {RandomTensor({16, 3}, 14)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError(
                [](auto v) { return ad::BilinearResizeGrid(v[0], 2, 2, 5, 3); },
                {RandomTensor({4, 3}, 15)}),
            kPrimitiveTol);
  EXPECT_LT(MaxOpGradError(
                [](auto v) { return ad::BilinearResizeGrid(v[0], 8, 8, 2, 2); },
                {RandomTensor({64, 2}, 16)}),
            kPrimitiveTol);
}

TEST(AutodiffTest, CrossEntropyMatchesPerCellLoop) {
  const Tensor z = RandomTensor({5, 3}, 17, 2.0);
  const std::vector<std::uint8_t> labels = {0, 255, 2, 1, 255};
  Tape tape;
  Var zv = tape.Variable(z);
  Var l = ad::SoftmaxCrossEntropy(zv, labels, 255);
  double expected = 0.0;
  int count = 0;
  for (std::size_t r = 0; r < 5; ++r) {
    if (labels[r] == 255) continue;
    double norm = 0.0;
    for (std::size_t c = 0; c < 3; ++c) norm += std::exp(z(r, c));
    expected += -std::log(std::exp(z(r, labels[r])) / norm);
    ++count;
  }
  EXPECT_NEAR(l.value().item(), expected / count, 1e-14);
  EXPECT_LT(MaxOpGradError(
                [&](auto v) { return ad::SoftmaxCrossEntropy(v[0], labels, 255); },
                {z}),
            kPrimitiveTol);
  tape.Backward(l);
  const Tensor g = tape.grad(zv);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(g(1, c), 0.0);
    EXPECT_EQ(g(4, c), 0.0);
  }
}

TEST(AutodiffTest, CrossEntropyEdgeCases) {
  Tape tape;
  Var z = tape.Variable(RandomTensor({2, 3}, 18));
  const std::vector<std::uint8_t> none = {255, 255};
  Var l = ad::SoftmaxCrossEntropy(z, none, 255);
  EXPECT_EQ(l.value().item(), 0.0);
  tape.Backward(l);
  EXPECT_EQ(tape.grad(z), Tensor({2, 3}));
  const std::vector<std::uint8_t> bad = {3, 0};
  EXPECT_THROW(ad::SoftmaxCrossEntropy(z, bad, 255), ValidationError);
}

TEST(AutodiffTest, BackwardNeedsScalarRoot) {
  Tape tape;
  Var x = tape.Variable(RandomTensor({2, 2}, 19));
  EXPECT_THROW(tape.Backward(x), UsageError);
}

TEST(AutodiffTest, SharedInputAccumulatesGradient) {
  Tape tape;
  Var x = tape.Variable(Tensor::FromRows({{3.0}}));
  Var y = ad::Sum(ad::Add(ad::Mul(x, x), x));
  tape.Backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 7.0);
}

TEST(AutodiffTest, UnreachedVariableHasZeroGradient) {
  Tape tape;
  Var x = tape.Variable(Tensor::FromRows({{1.0, 2.0}}));
  Var unused = tape.Variable(Tensor::FromRows({{5.0}}));
  tape.Backward(ad::Sum(x));
  EXPECT_EQ(tape.grad(unused), Tensor::FromRows({{0.0}}));
}

TEST(AutodiffTest, GeluIsExactErfForm) {
  for (double x : {-3.0, -0.5, 0.0, 0.7, 2.0}) {
    EXPECT_NEAR(GeluValue(x), 0.5 * x * (1 + std::erf(x / std::sqrt(2.0))), 1e-16);
  }
}

TEST(AutodiffTest, FiniteDiffCheckPassesCorrectGradients) {
  ParameterMap params = {{"layer.w", RandomTensor({3, 2}, 20)},
                         {"layer.b", RandomTensor({2}, 21)}};
  const Tensor x = RandomTensor({4, 3}, 22);
  auto fn = [&](const ParameterMap& p, GradientMap* g) {
    Tape tape;
    VarMap vars = BindParameters(tape, p);
    Var y = ad::Gelu(ad::AddRowVector(ad::MatMul(tape.Constant(x), vars.at("layer.w")),
                                      vars.at("layer.b")));
    Var l = ad::Mean(ad::Square(y));
    if (g) {
      tape.Backward(l);
      *g = CollectGradients(tape, vars);
    }
    return l.value().item();
  };
  GradCheckOptions opt;
  opt.num_samples = 8;
  const GradCheckReport report = FiniteDiffCheck(fn, params, opt);
  // Four from w; b only has two coordinates.
  EXPECT_EQ(report.entries.size(), 6u);
  EXPECT_LT(report.max_rel_error, 1e-7);
  EXPECT_EQ(report.group_max.count("layer"), 1u);
}

// Negative control: a deliberately wrong backward must be caught.
TEST(AutodiffTest, FiniteDiffCheckCatchesWrongGradient) {
  ParameterMap params = {{"w", RandomTensor({3}, 23)}};
  auto fn = [&](const ParameterMap& p, GradientMap* g) {
    Tape tape;
    VarMap vars = BindParameters(tape, p);
    const Tensor w = p.at("w");
    Tensor squared = w;
    for (double& v : squared.data()) v *= v;
    // Claims d/dw (w²) = w instead of 2w.
    Var sq = tape.Record(
        "bad_square", squared, {vars.at("w")},
        [w](const Tensor&, const Tensor& gy, std::span<Tensor* const> gx) {
          if (!gx[0]) return;
          for (std::size_t i = 0; i < w.size(); ++i) (*gx[0])[i] += gy[i] * w[i];
        });
    Var l = ad::Sum(sq);
    if (g) {
      tape.Backward(l);
      *g = CollectGradients(tape, vars);
    }
    return l.value().item();
  };
  GradCheckOptions opt;
  opt.num_samples = 3;
  EXPECT_GT(FiniteDiffCheck(fn, params, opt).max_rel_error, 0.3);
}

TEST(AutodiffTest, RelativeErrorFormula) {
  EXPECT_DOUBLE_EQ(RelativeGradientError(0.0, 0.0), 0.0);
  EXPECT_NEAR(RelativeGradientError(1.0, 1.1), 0.1 / (2.1 + 1e-8), 1e-15);
  EXPECT_EQ(ParameterGroup("block1.layer1.attn.q_w"), "block1.layer1.attn");
}

}  // namespace
}  // namespace sparseseg
