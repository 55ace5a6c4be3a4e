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
#include "sparseseg/encoder.h"

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>
#include "sparseseg/errors.h"
#include "sparseseg/model.h"
#include "sparseseg/reference_model.h"
#include "test_util.h"

namespace sparseseg {
namespace {

using testing_util::MaxAbsDiff;
using testing_util::NaiveMatMul;
using testing_util::RandomTensor;
using testing_util::TinyModel;

ParameterMap AttentionParams(std::size_t d, std::uint64_t seed, double scale) {
  ParameterMap p;
  std::uint64_t s = seed;
  for (const char* proj : {"q", "k", "v", "o"}) {
    p[std::string("t.attn.") + proj + "_w"] = RandomTensor({d, d}, ++s, scale);
    p[std::string("t.attn.") + proj + "_b"] = RandomTensor({d}, ++s, scale);
  }
  return p;
}

TEST(EncoderTest, PyramidTokenCounts) {
  EncoderConfig cfg;
  cfg.image_width = cfg.image_height = 16;
  for (auto& b : cfg.blocks) b.reduction = 1;
  cfg.Validate();
  EXPECT_EQ(cfg.Tokens(0), 64u);
  EXPECT_EQ(cfg.Tokens(1), 16u);
  EXPECT_EQ(cfg.Tokens(2), 4u);
  EXPECT_EQ(cfg.Tokens(3), 1u);

  const EncoderConfig toy;
  EXPECT_EQ(toy.Tokens(0), 1024u);
  EXPECT_EQ(toy.Tokens(1), 256u);
  EXPECT_EQ(toy.Tokens(2), 64u);
  EXPECT_EQ(toy.Tokens(3), 16u);
  EXPECT_EQ(toy.ReducedTokens(0), 64u);
  EXPECT_EQ(toy.ReducedTokens(1), 64u);
  EXPECT_EQ(toy.ReducedTokens(2), 64u);
  EXPECT_EQ(toy.ReducedTokens(3), 16u);
}

TEST(EncoderTest, ValidationRejectsBadGeometry) {
  EncoderConfig cfg;
  cfg.blocks[0].stride = 2;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = EncoderConfig();
  cfg.image_width = 60;
  EXPECT_THROW(cfg.Validate(), ConfigError);
  cfg = EncoderConfig();
  cfg.blocks[3].reduction = 3;
  EXPECT_THROW(cfg.Validate(), ConfigError);
}

TEST(EncoderTest, PatchesAreRowMajor) {
  EncoderConfig cfg;
  cfg.image_width = cfg.image_height = 4;
  Tensor image({4, 4, 3});
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<double>(i);
  const Tensor patches = ExtractPatches(image, cfg);
  ASSERT_EQ(patches.shape(), (Shape{4, 12}));
  // Token 1 is the top-right patch: pixels (0,2), (0,3), (1,2), (1,3).
  const std::size_t px[] = {2, 3, 6, 7};
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_EQ(patches(1, k * 3 + c), image[px[k] * 3 + c]);
    }
  }
  EXPECT_THROW(ExtractPatches(Tensor({4, 4, 1}), cfg), DimensionError);
}

TEST(EncoderTest, ZeroQueryKeyProjectionsGiveUniformAttention) {
  ParameterMap p = AttentionParams(6, 1, 0.5);
  for (const char* name : {"t.attn.q_w", "t.attn.q_b", "t.attn.k_w", "t.attn.k_b"}) {
    p[name] = Tensor(p[name].shape());
  }
  Tape tape;
  VarMap vars = BindParameters(tape, p);
  AttentionOutput out = EfficientSelfAttention(
      tape.Constant(RandomTensor({16, 6}, 2)), 4, 4, 2, vars, "t");
  const Tensor& a = out.attention.value();
  ASSERT_EQ(a.shape(), (Shape{16, 4}));
  for (double v : a.data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

// Direct per-entry loops, no pooling (R = 1).
TEST(EncoderTest, EfficientAttentionMatchesDenseLoopWithoutReduction) {
  const std::size_t n = 9, d = 4;
  const ParameterMap p = AttentionParams(d, 3, 0.6);
  const Tensor x = RandomTensor({n, d}, 4);
  Tape tape;
  VarMap vars = BindParameters(tape, p);
  AttentionOutput out = EfficientSelfAttention(tape.Constant(x), 3, 3, 1, vars, "t");

  auto affine = [&](const char* proj) {
    Tensor y = NaiveMatMul(x, p.at(std::string("t.attn.") + proj + "_w"));
    const Tensor& b = p.at(std::string("t.attn.") + proj + "_b");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) y(i, j) += b[j];
    }
    return y;
  };
  const Tensor q = affine("q"), k = affine("k"), v = affine("v");
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q(i, c) * k(j, c);
      a(i, j) = std::exp(s / 2.0);
      z += a(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= z;
  }
  Tensor mixed = NaiveMatMul(NaiveMatMul(a, v), p.at("t.attn.o_w"));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      mixed(i, j) += p.at("t.attn.o_b")[j] + x(i, j);
    }
  }
  EXPECT_LT(MaxAbsDiff(out.attention.value(), a), 1e-10);
  EXPECT_LT(MaxAbsDiff(out.tokens.value(), mixed), 1e-10);
}

TEST(EncoderTest, AttentionIsPermutationEquivariantWithoutPositions) {
  const std::size_t n = 6, d = 3;
  const ParameterMap p = AttentionParams(d, 5, 0.7);
  const Tensor x = RandomTensor({n, d}, 6);
  Tensor swapped = x;
  for (std::size_t c = 0; c < d; ++c) std::swap(swapped(1, c), swapped(4, c));
  Tape tape;
  VarMap vars = BindParameters(tape, p);
  const Tensor y = EfficientSelfAttention(tape.Constant(x), 2, 3, 1, vars, "t")
                       .tokens.value();
  const Tensor ys = EfficientSelfAttention(tape.Constant(swapped), 2, 3, 1, vars, "t")
                        .tokens.value();
  for (std::size_t c = 0; c < d; ++c) {
    EXPECT_NEAR(ys(1, c), y(4, c), 1e-14);
    EXPECT_NEAR(ys(4, c), y(1, c), 1e-14);
    EXPECT_NEAR(ys(0, c), y(0, c), 1e-14);
  }
}

TEST(EncoderTest, AttentionRowsAreStochasticAndAggregateIsLayerMean) {
  const ModelConfig cfg;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const ParameterMap params = InitModelParameters(cfg, seed);
    Tape tape;
    VarMap vars = BindParameters(tape, params);
    const Tensor image = RandomTensor({64, 64, 3}, seed + 10);
    const EncoderOutput out = EncoderForward(tape, image, cfg.encoder, vars);
    ASSERT_EQ(out.attention.size(), kNumBlocks);
    for (std::size_t l = 0; l < kNumBlocks; ++l) {
      const auto& block = out.attention[l];
      EXPECT_EQ(out.features[l].value().shape(),
                (Shape{cfg.encoder.Tokens(l), cfg.encoder.blocks[l].embed_dim}));
      Tensor mean(block.aggregate.value().shape());
      for (const Var& m : block.layer_maps) {
        ASSERT_EQ(m.value().shape(),
                  (Shape{cfg.encoder.Tokens(l), cfg.encoder.ReducedTokens(l)}));
        for (std::size_t i = 0; i < mean.size(); ++i) {
          mean[i] += m.value()[i] / static_cast<double>(block.layer_maps.size());
        }
      }
      EXPECT_LT(MaxAbsDiff(block.aggregate.value(), mean), 1e-12);
      const Tensor& a = block.aggregate.value();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) s += a(r, c);
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(EncoderTest, AggregateOfNothingIsAnError) {
  EXPECT_THROW(AggregateBlockAttention(std::span<const Tensor>()), ConfigError);
}

TEST(EncoderTest, InitFollowsNamingAndScale) {
  const EncoderConfig cfg;
  Rng rng(0);
  const ParameterMap p = InitEncoderParameters(cfg, rng);
  EXPECT_EQ(p.at("block1.embed.w").shape(), (Shape{12, 16}));
  EXPECT_EQ(p.at("block2.embed.w").shape(), (Shape{16, 24}));
  EXPECT_EQ(p.at("block4.pos").shape(), (Shape{16, 48}));
  EXPECT_EQ(p.at("block3.layer2.ffn.fc1_w").shape(), (Shape{32, 64}));
  for (double v : p.at("block2.layer1.attn.q_b").data()) EXPECT_EQ(v, 0.0);
  double sq = 0.0;
  const Tensor& w = p.at("block1.layer1.ffn.fc1_w");
  for (double v : w.data()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / w.size()), 0.02, 0.004);
}

TEST(EncoderTest, ForwardIsDeterministic) {
  const ModelConfig cfg = TinyModel();
  const ParameterMap params = InitModelParameters(cfg, 4);
  const Tensor image = RandomTensor({16, 16, 3}, 5);
  Tape t1, t2;
  VarMap v1 = BindParameters(t1, params), v2 = BindParameters(t2, params);
  EXPECT_EQ(ModelForward(t1, image, cfg, v1).logits.value(),
            ModelForward(t2, image, cfg, v2).logits.value());
}

// The long double reference shares no code with the tape ops.
TEST(EncoderTest, ForwardMatchesIndependentReference) {
  const ModelConfig cfg;
  const ParameterMap params = InitModelParameters(cfg, 6);
  Tensor image = RandomTensor({64, 64, 3}, 7, 0.3);
  Tape tape;
  VarMap vars = BindParameters(tape, params);
  const ModelOutput out = ModelForward(tape, image, cfg, vars);
  const ReferenceForward ref = ReferenceModelForward(cfg, params, image);
  auto diff = [](const Tensor& t, const ReferenceMatrix& m) {
    double worst = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      worst = std::max(worst, std::abs(t[i] - static_cast<double>(m.data[i])));
    }
    return worst;
  };
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    EXPECT_LT(diff(out.encoder.features[l].value(), ref.features[l]), 1e-12);
    EXPECT_LT(diff(out.encoder.attention[l].aggregate.value(), ref.aggregate[l]),
              1e-12);
  }
  EXPECT_LT(diff(out.logits.value(), ref.logits), 1e-12);
}

}  // namespace
}  // namespace sparseseg
