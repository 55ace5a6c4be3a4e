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
#ifndef SPARSESEG_ENCODER_H_
#define SPARSESEG_ENCODER_H_

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sparseseg/autodiff.h"
#include "sparseseg/rng.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

inline constexpr std::size_t kNumBlocks = 4;

struct BlockConfig {
  std::size_t num_layers = 2;
  std::size_t embed_dim = 16;
  // Keys and values are computed from reduction×reduction mean-pooled tokens.
  std::size_t reduction = 1;
  // Spatial stride from the previous block's grid to this one.
  std::size_t stride = 1;
};

// Geometry of the toy hierarchical encoder. Block l works on a token grid of
// (H / (p·∏strides)) × (W / (p·∏strides)) patches.
struct EncoderConfig {
  std::size_t image_width = 64;
  std::size_t image_height = 64;
  std::size_t patch_size = 2;
  std::array<BlockConfig, kNumBlocks> blocks = {{
      {2, 16, 4, 1},
      {2, 24, 2, 2},
      {2, 32, 1, 2},
      {2, 48, 1, 2},
  }};
  // Feed-forward hidden width = ffn_ratio · embed_dim.
  std::size_t ffn_ratio = 2;

  // Throws ConfigError on any geometric inconsistency.
  void Validate() const;

  std::size_t GridHeight(std::size_t block) const;
  std::size_t GridWidth(std::size_t block) const;
  std::size_t ReducedHeight(std::size_t block) const;
  std::size_t ReducedWidth(std::size_t block) const;
  // M_l: tokens of block l.
  std::size_t Tokens(std::size_t block) const {
    return GridHeight(block) * GridWidth(block);
  }
  // M'_l = M_l / R_l².
  std::size_t ReducedTokens(std::size_t block) const {
    return ReducedHeight(block) * ReducedWidth(block);
  }
  std::size_t PatchDim() const { return 3 * patch_size * patch_size; }
};

// Attention maps of one block: A_{l,n} for each layer and the layer mean A_l,
// all of shape M_l × M'_l.
template <typename T>
struct BlockAttentionT {
  std::size_t grid_h = 0, grid_w = 0;
  std::size_t reduced_h = 0, reduced_w = 0;
  std::vector<T> layer_maps;
  T aggregate;
};

template <typename T>
using AttentionStackT = std::vector<BlockAttentionT<T>>;

using AttentionStack = AttentionStackT<Tensor>;
using AttentionVars = AttentionStackT<Var>;

AttentionStack MaterializeAttention(const AttentionVars& vars);

struct AttentionOutput {
  Var tokens;     // attended tokens with residual, M_l × D_l
  Var attention;  // A_{l,n}, M_l × M'_l
};

struct EncoderOutput {
  std::vector<Var> features;  // one M_l × D_l tensor per block
  AttentionVars attention;
};

// Parameter naming: "block{l}.embed.{w,b}", "block{l}.pos",
// "block{l}.layer{n}.attn.{q,k,v,o}_{w,b}", "block{l}.layer{n}.ffn.{fc1,fc2}_{w,b}".
ParameterMap InitEncoderParameters(const EncoderConfig& cfg, Rng& rng);

// Flattens each p×p×3 patch (row-major within the patch, channels fastest)
// into one row; rows follow row-major order over the patch grid.
Tensor ExtractPatches(const Tensor& image, const EncoderConfig& cfg);

// Linear projection of every patch plus the block-1 positional embedding.
Var PatchEmbed(Tape& tape, const Tensor& image, const EncoderConfig& cfg,
               const VarMap& params);

// Single-head attention whose keys and values come from the
// reduction×reduction mean-pooled token grid:
//   A = softmax(Q Kᵀ / √D),  out = tokens + (A V) W_o + b_o.
// `prefix` names the layer, e.g. "block1.layer0".
AttentionOutput EfficientSelfAttention(Var tokens, std::size_t grid_h,
                                       std::size_t grid_w,
                                       std::size_t reduction,
                                       const VarMap& params,
                                       const std::string& prefix);

// tokens + fc2(gelu(fc1(tokens))).
Var FeedForward(Var tokens, const VarMap& params, const std::string& prefix);

// Elementwise mean of the layer maps of one block.
Var AggregateBlockAttention(std::span<const Var> layer_maps);
Tensor AggregateBlockAttention(std::span<const Tensor> layer_maps);

EncoderOutput EncoderForward(Tape& tape, const Tensor& image,
                             const EncoderConfig& cfg, const VarMap& params);

std::string LayerPrefix(std::size_t block, std::size_t layer);

}  // namespace sparseseg

#endif  // SPARSESEG_ENCODER_H_
