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

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

constexpr double kInitStddev = 0.02;

Tensor NormalTensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.Normal(0.0, kInitStddev);
  return t;
}

std::size_t CumulativeStride(const EncoderConfig& cfg, std::size_t block) {
  std::size_t s = 1;
  for (std::size_t l = 0; l <= block; ++l) s *= cfg.blocks[l].stride;
  return s;
}

const Var& Param(const VarMap& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

std::string BlockName(std::size_t block) {
  return "block" + std::to_string(block + 1);
}

Var Linear(Var x, const VarMap& params, const std::string& w,
           const std::string& b) {
  return ad::AddRowVector(ad::MatMul(x, Param(params, w)), Param(params, b));
}

}  // namespace

void EncoderConfig::Validate() const {
  if (patch_size == 0) throw ConfigError("patch_size must be >= 1");
  if (image_width == 0 || image_height == 0) {
    throw ConfigError("image extents must be positive");
  }
  if (blocks[0].stride != 1) throw ConfigError("block 1 stride must be 1");
  if (ffn_ratio == 0) throw ConfigError("ffn_ratio must be >= 1");
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const BlockConfig& b = blocks[l];
    const std::string name = "block " + std::to_string(l + 1);
    if (b.num_layers < 1) throw ConfigError(name + ": num_layers must be >= 1");
    if (b.embed_dim < 2) throw ConfigError(name + ": embed_dim must be >= 2");
    if (b.reduction < 1) throw ConfigError(name + ": reduction must be >= 1");
    if (b.stride < 1) throw ConfigError(name + ": stride must be >= 1");
    const std::size_t unit = patch_size * CumulativeStride(*this, l);
    if (image_width % unit != 0 || image_height % unit != 0) {
      throw ConfigError(name + ": image " + std::to_string(image_height) + "x" +
                        std::to_string(image_width) +
                        " not divisible by patch_size*strides = " +
                        std::to_string(unit));
    }
    if (GridHeight(l) % b.reduction != 0 || GridWidth(l) % b.reduction != 0) {
      throw ConfigError(name + ": reduction " + std::to_string(b.reduction) +
                        " incompatible with token grid " +
                        std::to_string(GridHeight(l)) + "x" +
                        std::to_string(GridWidth(l)));
    }
  }
}

std::size_t EncoderConfig::GridHeight(std::size_t block) const {
  return image_height / (patch_size * CumulativeStride(*this, block));
}

std::size_t EncoderConfig::GridWidth(std::size_t block) const {
  return image_width / (patch_size * CumulativeStride(*this, block));
}

std::size_t EncoderConfig::ReducedHeight(std::size_t block) const {
  return GridHeight(block) / blocks.at(block).reduction;
}

std::size_t EncoderConfig::ReducedWidth(std::size_t block) const {
  return GridWidth(block) / blocks.at(block).reduction;
}

std::string LayerPrefix(std::size_t block, std::size_t layer) {
  return BlockName(block) + ".layer" + std::to_string(layer + 1);
}

AttentionStack MaterializeAttention(const AttentionVars& vars) {
  AttentionStack out;
  for (const auto& b : vars) {
    BlockAttentionT<Tensor> t;
    t.grid_h = b.grid_h;
    t.grid_w = b.grid_w;
    t.reduced_h = b.reduced_h;
    t.reduced_w = b.reduced_w;
    for (const Var& m : b.layer_maps) t.layer_maps.push_back(m.value());
    t.aggregate = b.aggregate.value();
    out.push_back(std::move(t));
  }
  return out;
}

ParameterMap InitEncoderParameters(const EncoderConfig& cfg, Rng& rng) {
  cfg.Validate();
  ParameterMap p;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const std::size_t d = cfg.blocks[l].embed_dim;
    const std::size_t in_dim = l == 0 ? cfg.PatchDim() : cfg.blocks[l - 1].embed_dim;
    const std::string block = BlockName(l);
    p[block + ".embed.w"] = NormalTensor({in_dim, d}, rng);
    p[block + ".embed.b"] = Tensor({d});
    p[block + ".pos"] = NormalTensor({cfg.Tokens(l), d}, rng);
    const std::size_t hidden = cfg.ffn_ratio * d;
    for (std::size_t n = 0; n < cfg.blocks[l].num_layers; ++n) {
      const std::string layer = LayerPrefix(l, n);
      for (const char* proj : {"q", "k", "v", "o"}) {
        p[layer + ".attn." + proj + "_w"] = NormalTensor({d, d}, rng);
        p[layer + ".attn." + proj + "_b"] = Tensor({d});
      }
      p[layer + ".ffn.fc1_w"] = NormalTensor({d, hidden}, rng);
      p[layer + ".ffn.fc1_b"] = Tensor({hidden});
      p[layer + ".ffn.fc2_w"] = NormalTensor({hidden, d}, rng);
      p[layer + ".ffn.fc2_b"] = Tensor({d});
    }
  }
  return p;
}

Tensor ExtractPatches(const Tensor& image, const EncoderConfig& cfg) {
  if (image.rank() != 3 || image.dim(0) != cfg.image_height ||
      image.dim(1) != cfg.image_width || image.dim(2) != 3) {
    throw DimensionError("image " + ShapeToString(image.shape()) +
                         " does not match configured " +
                         ShapeToString({cfg.image_height, cfg.image_width, 3}));
  }
  const std::size_t p = cfg.patch_size;
  if (cfg.image_height % p != 0 || cfg.image_width % p != 0) {
    throw ConfigError("image extents not divisible by patch_size");
  }
  const std::size_t gh = cfg.image_height / p, gw = cfg.image_width / p;
  Tensor patches({gh * gw, cfg.PatchDim()});
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      double* row = &patches.data()[(py * gw + px) * cfg.PatchDim()];
      for (std::size_t dy = 0; dy < p; ++dy) {
        const double* src =
            &image.data()[((py * p + dy) * cfg.image_width + px * p) * 3];
        std::copy_n(src, p * 3, row + dy * p * 3);
      }
    }
  }
  return patches;
}

Var PatchEmbed(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
               const VarMap& params) {
  Var patches = tape.Constant(ExtractPatches(image, cfg));
  Var tokens = Linear(patches, params, "block1.embed.w", "block1.embed.b");
  return ad::Add(tokens, Param(params, "block1.pos"));
}

AttentionOutput EfficientSelfAttention(Var tokens, std::size_t grid_h,
                                       std::size_t grid_w,
                                       std::size_t reduction,
                                       const VarMap& params,
                                       const std::string& prefix) {
  const std::size_t d = tokens.value().cols();
  if (reduction == 0 || grid_h % reduction != 0 || grid_w % reduction != 0) {
    throw ConfigError(prefix + ": reduction " + std::to_string(reduction) +
                      " incompatible with token grid " + std::to_string(grid_h) +
                      "x" + std::to_string(grid_w));
  }
  const std::string attn = prefix + ".attn.";
  Var reduced = ad::MeanPoolGrid(tokens, grid_h, grid_w, reduction);
  Var q = Linear(tokens, params, attn + "q_w", attn + "q_b");
  Var k = Linear(reduced, params, attn + "k_w", attn + "k_b");
  Var v = Linear(reduced, params, attn + "v_w", attn + "v_b");
  Var scores = ad::Scale(ad::MatMulTransB(q, k), 1.0 / std::sqrt(double(d)));
  Var a = ad::SoftmaxRows(scores);
  Var mixed = Linear(ad::MatMul(a, v), params, attn + "o_w", attn + "o_b");
  return {ad::Add(tokens, mixed), a};
}

Var FeedForward(Var tokens, const VarMap& params, const std::string& prefix) {
  const std::string ffn = prefix + ".ffn.";
  Var hidden = ad::Gelu(Linear(tokens, params, ffn + "fc1_w", ffn + "fc1_b"));
  return ad::Add(tokens, Linear(hidden, params, ffn + "fc2_w", ffn + "fc2_b"));
}

Var AggregateBlockAttention(std::span<const Var> layer_maps) {
  if (layer_maps.empty()) throw ConfigError("aggregate: no attention maps");
  Var sum = layer_maps[0];
  for (std::size_t n = 1; n < layer_maps.size(); ++n) {
    sum = ad::Add(sum, layer_maps[n]);
  }
  if (layer_maps.size() == 1) return sum;
  return ad::Scale(sum, 1.0 / static_cast<double>(layer_maps.size()));
}

Tensor AggregateBlockAttention(std::span<const Tensor> layer_maps) {
  if (layer_maps.empty()) throw ConfigError("aggregate: no attention maps");
  Tensor mean(layer_maps[0].shape());
  for (const Tensor& m : layer_maps) {
    if (m.shape() != mean.shape()) {
      throw DimensionError("aggregate: map shapes " + ShapeToString(m.shape()) +
                           " and " + ShapeToString(mean.shape()) + " differ");
    }
    for (std::size_t i = 0; i < m.size(); ++i) mean[i] += m[i];
  }
  const double inv = 1.0 / static_cast<double>(layer_maps.size());
  for (double& v : mean.data()) v *= inv;
  return mean;
}

EncoderOutput EncoderForward(Tape& tape, const Tensor& image,
                             const EncoderConfig& cfg, const VarMap& params) {
  cfg.Validate();
  EncoderOutput out;
  Var x;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const BlockConfig& bc = cfg.blocks[l];
    const std::string block = BlockName(l);
    const std::size_t gh = cfg.GridHeight(l), gw = cfg.GridWidth(l);
    if (l == 0) {
      x = PatchEmbed(tape, image, cfg, params);
    } else {
      Var pooled = ad::MeanPoolGrid(x, cfg.GridHeight(l - 1),
                                    cfg.GridWidth(l - 1), bc.stride);
      x = Linear(pooled, params, block + ".embed.w", block + ".embed.b");
      x = ad::Add(x, Param(params, block + ".pos"));
    }
    BlockAttentionT<Var> attention;
    attention.grid_h = gh;
    attention.grid_w = gw;
    attention.reduced_h = cfg.ReducedHeight(l);
    attention.reduced_w = cfg.ReducedWidth(l);
    for (std::size_t n = 0; n < bc.num_layers; ++n) {
      const std::string layer = LayerPrefix(l, n);
      AttentionOutput att =
          EfficientSelfAttention(x, gh, gw, bc.reduction, params, layer);
      attention.layer_maps.push_back(att.attention);
      x = FeedForward(att.tokens, params, layer);
    }
    attention.aggregate = AggregateBlockAttention(attention.layer_maps);
    out.features.push_back(x);
    out.attention.push_back(std::move(attention));
  }
  return out;
}

}  // namespace sparseseg
