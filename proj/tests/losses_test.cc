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
#include "sparseseg/losses.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include "sparseseg/errors.h"
#include "test_util.h"

namespace sparseseg {
namespace {

using testing_util::MaxAbsDiff;
using testing_util::RandomTensor;

Tensor Rows(std::size_t rows, std::size_t cols, std::vector<double> values) {
  Tensor t({rows, cols});
  std::copy(values.begin(), values.end(), t.data().begin());
  return t;
}

// Random row-stochastic matrix.
Tensor RandomStochastic(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Tensor a = RandomTensor({rows, cols}, seed);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += (a(i, j) = std::exp(a(i, j)));
    for (std::size_t j = 0; j < cols; ++j) a(i, j) /= s;
  }
  return a;
}

// Block grids of a 8×8 token pyramid: 8, 4, 2, 1 per side, reduced by r.
AttentionStack MakeStack(std::array<std::size_t, 4> reduce, std::uint64_t seed,
                         bool identity = false) {
  AttentionStack stack;
  std::size_t g = 8;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    BlockAttentionT<Tensor> b;
    b.grid_h = b.grid_w = g;
    b.reduced_h = b.reduced_w = g / reduce[l];
    const std::size_t m = g * g, mr = b.reduced_h * b.reduced_w;
    if (identity) {
      b.aggregate = Tensor({m, mr});
      for (std::size_t i = 0; i < m; ++i) b.aggregate(i, i) = 1.0;
    } else {
      b.aggregate = RandomStochastic(m, mr, seed + l);
    }
    b.layer_maps = {b.aggregate};
    stack.push_back(std::move(b));
    g = std::max<std::size_t>(1, g / 2);
  }
  return stack;
}

TEST(LossesTest, BlockTermHandOracle) {
  const Tensor y = Rows(1, 2, {0.6, 0.4});
  const Tensor p = Rows(1, 2, {0.5, 0.5});
  EXPECT_NEAR(BlockAffinityTerm(y, p, Metric::kL1), 0.2, 1e-15);
  EXPECT_NEAR(BlockAffinityTerm(y, p, Metric::kL2), 0.02, 1e-15);
  EXPECT_NEAR(BlockAffinityTerm(y, p, Metric::kKL),
              0.6 * std::log(1.2) + 0.4 * std::log(0.8), 1e-15);
  EXPECT_NEAR(BlockAffinityTerm(y, p, Metric::kCE), std::log(2.0), 1e-15);
}

TEST(LossesTest, BlockTermAveragesOverRows) {
  const Tensor y = Rows(2, 2, {0.6, 0.4, 0.5, 0.5});
  const Tensor p = Rows(2, 2, {0.5, 0.5, 0.5, 0.5});
  EXPECT_NEAR(BlockAffinityTerm(y, p, Metric::kL1), 0.1, 1e-15);
}

TEST(LossesTest, ConstantPredictionHasNoAffinityLoss) {
  const AttentionStack stack = MakeStack({4, 2, 1, 1}, 3);
  Tensor logits({64, 4});
  const double row[] = {0.3, -1.0, 2.0, 0.1};
  for (std::size_t i = 0; i < 64; ++i) {
    for (std::size_t c = 0; c < 4; ++c) logits(i, c) = row[c];
  }
  for (auto norm : {NormalizationInput::kProbabilities, NormalizationInput::kLogits}) {
    LossConfig cfg;
    cfg.normalization = norm;
    for (Metric m : {Metric::kL1, Metric::kL2, Metric::kKL}) {
      cfg.metric = m;
      EXPECT_NEAR(AffinityLoss(stack, logits, cfg), 0.0, 1e-14) << MetricName(m);
    }
    // CE collapses to the entropy of the normalized row.
    cfg.metric = Metric::kCE;
    PropagationBundle bundle;
    const double ce = AffinityLoss(stack, logits, cfg, &bundle);
    const Tensor& q = bundle.blocks[0].direct_norm;
    double entropy = 0.0;
    for (std::size_t c = 0; c < 4; ++c) entropy -= q(0, c) * std::log(q(0, c));
    EXPECT_NEAR(ce, entropy, 1e-12);
  }
}

TEST(LossesTest, IdentityAttentionReproducesDirectPrediction) {
  const AttentionStack stack = MakeStack({1, 1, 1, 1}, 0, /*identity=*/true);
  const Tensor logits = RandomTensor({64, 5}, 4);
  LossConfig cfg;
  PropagationBundle bundle;
  EXPECT_EQ(AffinityLoss(stack, logits, cfg, &bundle), 0.0);
  ASSERT_EQ(bundle.blocks.size(), 4u);
  for (const auto& b : bundle.blocks) {
    EXPECT_EQ(b.propagated, b.direct);
    EXPECT_EQ(b.propagated_norm, b.direct_norm);
  }
}

TEST(LossesTest, BundleMatchesManualPipeline) {
  const AttentionStack stack = MakeStack({4, 2, 1, 1}, 5);
  const Tensor logits = RandomTensor({64, 3}, 6);
  LossConfig cfg;
  cfg.metric = Metric::kL2;
  PropagationBundle bundle;
  const double loss = AffinityLoss(stack, logits, cfg, &bundle);
  const Tensor probs = SoftmaxRows(logits);
  double sum = 0.0;
  for (const auto& b : bundle.blocks) {
    const auto& a = stack[b.block];
    const Tensor reduced = BilinearResize(probs.Reshaped({8, 8, 3}), a.reduced_h,
                                          a.reduced_w)
                               .Reshaped({a.reduced_h * a.reduced_w, 3});
    EXPECT_LT(MaxAbsDiff(b.reduced, reduced), 1e-15);
    const Tensor y = testing_util::NaiveMatMul(a.aggregate, reduced);
    EXPECT_LT(MaxAbsDiff(b.propagated, y), 1e-14);
    EXPECT_LT(MaxAbsDiff(b.propagated_norm, SoftmaxRows(y)), 1e-14);
    EXPECT_NEAR(b.term, BlockAffinityTerm(b.propagated_norm, b.direct_norm, Metric::kL2),
                1e-15);
    sum += b.term;
  }
  EXPECT_NEAR(loss, sum / 4, 1e-15);
}

TEST(LossesTest, BlockMaskAveragesOnlyEnabledBlocks) {
  const AttentionStack stack = MakeStack({4, 2, 1, 1}, 7);
  const Tensor logits = RandomTensor({64, 3}, 8);
  LossConfig all;
  PropagationBundle bundle;
  AffinityLoss(stack, logits, all, &bundle);
  LossConfig two;
  two.block_mask = {false, true, false, true};
  EXPECT_NEAR(AffinityLoss(stack, logits, two),
              (bundle.blocks[1].term + bundle.blocks[3].term) / 2, 1e-15);
}

TEST(LossesTest, DistancesAreNonNegative) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const AttentionStack stack = MakeStack({4, 2, 1, 1}, 100 + seed);
    const Tensor logits = RandomTensor({64, 5}, seed, 3.0);
    LossConfig cfg;
    for (Metric m : {Metric::kL1, Metric::kL2, Metric::kKL}) {
      cfg.metric = m;
      EXPECT_GE(AffinityLoss(stack, logits, cfg), 0.0);
    }
  }
}

TEST(LossesTest, AffinityGradientMatchesFiniteDifferences) {
  const AttentionStack stack = MakeStack({4, 2, 1, 1}, 9);
  Tensor logits = RandomTensor({64, 3}, 10);
  for (Metric m : {Metric::kL2, Metric::kKL, Metric::kCE}) {
    LossConfig cfg;
    cfg.metric = m;
    Tape tape;
    AttentionVars vars;
    for (const auto& b : stack) {
      BlockAttentionT<Var> v{b.grid_h, b.grid_w, b.reduced_h, b.reduced_w, {},
                             tape.Variable(b.aggregate)};
      vars.push_back(v);
    }
    Var x = tape.Variable(logits);
    tape.Backward(AffinityLoss(vars, x, cfg));
    const Tensor g = tape.grad(x);
    const Tensor ga = tape.grad(vars[1].aggregate);
    const double eps = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < logits.size(); i += 7) {
      Tensor up = logits, down = logits;
      up[i] += eps;
      down[i] -= eps;
      const double num =
          (AffinityLoss(stack, up, cfg) - AffinityLoss(stack, down, cfg)) / (2 * eps);
      worst = std::max(worst, RelativeGradientError(g[i], num));
    }
    for (std::size_t i = 0; i < ga.size(); i += 5) {
      AttentionStack up = stack, down = stack;
      up[1].aggregate[i] += eps;
      down[1].aggregate[i] -= eps;
      const double num =
          (AffinityLoss(up, logits, cfg) - AffinityLoss(down, logits, cfg)) / (2 * eps);
      worst = std::max(worst, RelativeGradientError(ga[i], num));
    }
    EXPECT_LT(worst, 1e-5) << MetricName(m);
  }
}

TEST(LossesTest, DownprojectRules) {
  LabelGrid px(4, 4);
  px.at(0, 1) = 2;                   // patch (0,0): single labeled pixel
  px.at(0, 2) = 1;                   // patch (0,1): conflict
  px.at(1, 3) = 3;
  px.at(2, 0) = 4;                   // patch (1,0): agreement
  px.at(3, 1) = 4;
  const LabelGrid patches = DownprojectLabels(px, 2);
  ASSERT_EQ(patches.height, 2u);
  EXPECT_EQ(patches.at(0, 0), 2);
  EXPECT_EQ(patches.at(0, 1), kIgnoreLabel);
  EXPECT_EQ(patches.at(1, 0), 4);
  EXPECT_EQ(patches.at(1, 1), kIgnoreLabel);
  EXPECT_THROW(DownprojectLabels(LabelGrid(5, 4), 2), DimensionError);
  EXPECT_THROW(DownprojectLabels(px, 0), DimensionError);
}

TEST(LossesTest, PartialCrossEntropyLoopOracle) {
  const Tensor logits = RandomTensor({6, 4}, 11);
  LabelGrid labels(2, 3);
  labels.labels = {0, kIgnoreLabel, 3, 2, kIgnoreLabel, 1};
  double sum = 0.0;
  int n = 0;
  for (std::size_t m = 0; m < 6; ++m) {
    if (labels.labels[m] == kIgnoreLabel) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits(m, c));
    sum -= logits(m, labels.labels[m]) - std::log(z);
    ++n;
  }
  EXPECT_NEAR(PartialCrossEntropy(logits, labels), sum / n, 1e-14);
  EXPECT_EQ(PartialCrossEntropy(logits, LabelGrid(2, 3)), 0.0);
}

TEST(LossesTest, ConfigValidation) {
  LossConfig cfg;
  cfg.alpha = -0.1;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg.alpha = 0.5;
  cfg.block_mask = {false, false, false, false};
  EXPECT_EQ(cfg.EnabledBlocks(), 0u);
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg.alpha = 0.0;
  EXPECT_NO_THROW(cfg.Validate());
}

TEST(LossesTest, MetricNamesRoundTrip) {
  for (Metric m : {Metric::kL1, Metric::kL2, Metric::kKL, Metric::kCE}) {
    EXPECT_EQ(ParseMetric(MetricName(m)), m);
  }
  EXPECT_EQ(ParseMetric("Kl"), Metric::kKL);
  EXPECT_FALSE(ParseMetric("l3").has_value());
}

TEST(LossesTest, TotalLossCombination) {
  EXPECT_DOUBLE_EQ(TotalLoss(1.5, 0.5, 1.2), 2.1);
  EXPECT_EQ(TotalLoss(1.5, 0.5, 0.0), 1.5);
}

}  // namespace
}  // namespace sparseseg
