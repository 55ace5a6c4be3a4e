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
#ifndef SPARSESEG_SEG_HEAD_H_
#define SPARSESEG_SEG_HEAD_H_

#include <cstddef>
#include <span>

#include "sparseseg/autodiff.h"
#include "sparseseg/encoder.h"
#include "sparseseg/rng.h"

namespace sparseseg {

struct HeadConfig {
  // C, including background.
  std::size_t num_classes = 5;
  // Width each level is projected to before fusion.
  std::size_t level_dim = 32;
  std::size_t fuse_dim = 32;
  // GELU after the fusion projection. Disabling it makes the head linear.
  bool activation = true;

  void Validate() const;
};

// "head.level{l}.{w,b}", "head.fuse.{w,b}", "head.cls.{w,b}".
ParameterMap InitHeadParameters(const EncoderConfig& enc, const HeadConfig& cfg,
                                Rng& rng);

// Projects each level to level_dim, bilinearly upsamples it to the block-1
// token grid, concatenates the levels, fuses, and classifies. Returns the
// M_1 × C logits.
Var Decode(std::span<const Var> features, const EncoderConfig& enc,
           const HeadConfig& cfg, const VarMap& params);
Tensor Decode(std::span<const Tensor> features, const EncoderConfig& enc,
              const HeadConfig& cfg, const ParameterMap& params);

}  // namespace sparseseg

#endif  // SPARSESEG_SEG_HEAD_H_
