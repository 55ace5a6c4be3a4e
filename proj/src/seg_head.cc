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
#include "sparseseg/seg_head.h"

#include <cmath>
#include <string>
#include <vector>

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

const Var& Param(const VarMap& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw ConfigError("missing parameter " + name);
  return it->second;
}

Var Linear(Var x, const VarMap& params, const std::string& prefix) {
  return ad::AddRowVector(ad::MatMul(x, Param(params, prefix + ".w")),
                          Param(params, prefix + ".b"));
}

std::string LevelName(std::size_t l) {
  return "head.level" + std::to_string(l + 1);
}

}  // namespace

void HeadConfig::Validate() const {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (num_classes > 255) throw ConfigError("num_classes must be <= 255");
  if (level_dim < 1 || fuse_dim < 1) {
    throw ConfigError("head dimensions must be >= 1");
  }
}

ParameterMap InitHeadParameters(const EncoderConfig& enc, const HeadConfig& cfg,
                                Rng& rng) {
  cfg.Validate();
  // Glorot-normal weights.
  auto normal = [&rng](Shape shape) {
    const double sd = std::sqrt(2.0 / static_cast<double>(shape[0] + shape[1]));
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.Normal(0.0, sd);
    return t;
  };
  ParameterMap p;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    p[LevelName(l) + ".w"] = normal({enc.blocks[l].embed_dim, cfg.level_dim});
    p[LevelName(l) + ".b"] = Tensor({cfg.level_dim});
  }
  p["head.fuse.w"] = normal({kNumBlocks * cfg.level_dim, cfg.fuse_dim});
  p["head.fuse.b"] = Tensor({cfg.fuse_dim});
  p["head.cls.w"] = normal({cfg.fuse_dim, cfg.num_classes});
  p["head.cls.b"] = Tensor({cfg.num_classes});
  return p;
}

Var Decode(std::span<const Var> features, const EncoderConfig& enc,
           const HeadConfig& cfg, const VarMap& params) {
  if (features.size() != kNumBlocks) {
    throw ConfigError("decode expects " + std::to_string(kNumBlocks) +
                      " feature levels, got " + std::to_string(features.size()));
  }
  const std::size_t h1 = enc.GridHeight(0), w1 = enc.GridWidth(0);
  std::vector<Var> levels;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    Var projected = Linear(features[l], params, LevelName(l));
    levels.push_back(ad::BilinearResizeGrid(projected, enc.GridHeight(l),
                                            enc.GridWidth(l), h1, w1));
  }
  Var fused = Linear(ad::ConcatCols(levels), params, "head.fuse");
  if (cfg.activation) fused = ad::Gelu(fused);
  return Linear(fused, params, "head.cls");
}

Tensor Decode(std::span<const Tensor> features, const EncoderConfig& enc,
              const HeadConfig& cfg, const ParameterMap& params) {
  Tape tape;
  const VarMap vars = BindParameters(tape, params);
  std::vector<Var> inputs;
  for (const Tensor& f : features) inputs.push_back(tape.Constant(f));
  return Decode(inputs, enc, cfg, vars).value();
}

}  // namespace sparseseg
