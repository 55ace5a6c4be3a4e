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
#ifndef SPARSESEG_REFERENCE_MODEL_H_
#define SPARSESEG_REFERENCE_MODEL_H_

#include <cstddef>
#include <vector>

#include "sparseseg/autodiff.h"
#include "sparseseg/labels.h"
#include "sparseseg/losses.h"
#include "sparseseg/model.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

// Plain-loop re-implementation of the forward pass and the training loss in
// long double. Shares no numeric code with the tape. Used as the value side
// of gradient checks, where double precision is too coarse for the tiny
// attention gradients at init.
struct ReferenceMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<long double> data;

  ReferenceMatrix() = default;
  ReferenceMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c) {}
  long double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  long double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

struct ReferenceForward {
  std::vector<ReferenceMatrix> features;        // per block, M_l × D_l
  std::vector<std::vector<ReferenceMatrix>> layer_maps;  // A_{l,n}
  std::vector<ReferenceMatrix> aggregate;       // A_l
  ReferenceMatrix logits;                       // M_1 × C
};

ReferenceForward ReferenceModelForward(const ModelConfig& cfg,
                                       const ParameterMap& params,
                                       const Tensor& image);

// L_seg + alpha · L_aff (L_seg alone when with_affinity is false).
long double ReferenceLoss(const ModelConfig& cfg, const ParameterMap& params,
                          const Tensor& image, const SparseLabelMap& sparse,
                          const LossConfig& loss, bool with_affinity = true);

}  // namespace sparseseg

#endif  // SPARSESEG_REFERENCE_MODEL_H_
