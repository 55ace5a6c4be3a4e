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
#ifndef SPARSESEG_ATTENTION_MAP_H_
#define SPARSESEG_ATTENTION_MAP_H_

#include <cstddef>
#include <vector>

#include "sparseseg/encoder.h"
#include "sparseseg/labels.h"
#include "sparseseg/model.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

// Aggregated attention maps A_l of one image, no gradients.
AttentionStack ComputeAttention(const Tensor& image, const ModelConfig& cfg,
                                const ParameterMap& params);

// Token of block `block` whose patch covers pixel (x, y). Throws
// ValidationError when the point lies outside the image.
std::size_t ReferenceToken(const EncoderConfig& cfg, std::size_t block,
                           std::size_t x, std::size_t y);

// Row of A_l for the reference token, reshaped to the reduced grid,
// min-max normalized (a constant row maps to 0.5) and bilinearly upsampled
// to H×W. One map per block, values in [0, 1].
std::vector<Tensor> AttentionHeatmaps(const AttentionStack& attention,
                                      const EncoderConfig& cfg, std::size_t x,
                                      std::size_t y);

// Rounds [0, 1] values to 0..255 for PGM output.
LabelGrid QuantizeHeatmap(const Tensor& heatmap);

// Mean heat over pixels of class `label` divided by the image-wide mean;
// > 1 means attention concentrates on that class. Report only.
double ClassConcentration(const Tensor& heatmap, const LabelGrid& mask,
                          std::uint8_t label);

}  // namespace sparseseg

#endif  // SPARSESEG_ATTENTION_MAP_H_
