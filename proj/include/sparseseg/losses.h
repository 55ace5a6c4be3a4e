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
#ifndef SPARSESEG_LOSSES_H_
#define SPARSESEG_LOSSES_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparseseg/autodiff.h"
#include "sparseseg/encoder.h"
#include "sparseseg/labels.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

// Distance between the normalized propagated and direct predictions.
enum class Metric { kL1, kL2, kKL, kCE };

std::string_view MetricName(Metric m);
// Accepts "l1", "l2", "kl", "ce" in any case.
std::optional<Metric> ParseMetric(std::string_view name);

// What is interpolated, propagated and then softmax-normalized per block.
// kProbabilities interpolates softmax(P), which is then normalized a second
// time. kLogits interpolates raw logits instead.
enum class NormalizationInput { kProbabilities, kLogits };

inline constexpr double kLogFloor = 1e-12;

struct LossConfig {
  double alpha = 1.2;
  Metric metric = Metric::kL1;
  std::array<bool, kNumBlocks> block_mask = {true, true, true, true};
  std::uint8_t ignore_index = kIgnoreLabel;
  NormalizationInput normalization = NormalizationInput::kProbabilities;

  std::size_t EnabledBlocks() const;
  // Throws ConfigError when alpha is negative or no block is enabled while
  // alpha > 0.
  void Validate() const;
};

// Maps pixel labels onto the patch grid: a patch takes a class when all of
// its labeled pixels agree on it; no labeled pixels or a conflict gives
// ignore.
LabelGrid DownprojectLabels(const LabelGrid& pixels, std::size_t patch_size,
                            std::uint8_t ignore = kIgnoreLabel);

// Mean of −log softmax(logits)[m, label_m] over labeled patches; 0 when no
// patch is labeled.
Var PartialCrossEntropy(Var logits, const LabelGrid& patch_labels,
                        std::uint8_t ignore = kIgnoreLabel);
double PartialCrossEntropy(const Tensor& logits, const LabelGrid& patch_labels,
                           std::uint8_t ignore = kIgnoreLabel);

// Y_l = A_l · P'_l.
Var Propagate(Var attention, Var reduced_probs);
Tensor Propagate(const Tensor& attention, const Tensor& reduced_probs);

// Row-wise softmax over the class dimension.
Var NormalizeCategories(Var x);
Tensor NormalizeCategories(const Tensor& x);

// Per-block distance, averaged over patches (rows):
//   L1: Σ_c |Y* − P*|      L2: Σ_c (Y* − P*)²
//   KL: Σ_c Y* ln(Y*/P*)   CE: −Σ_c Y* ln P*
// Logarithms use max(x, kLogFloor).
Var BlockAffinityTerm(Var propagated_norm, Var direct_norm, Metric metric);
double BlockAffinityTerm(const Tensor& propagated_norm,
                         const Tensor& direct_norm, Metric metric);

// Intermediate values of the affinity loss for one enabled block.
struct PropagationBlock {
  std::size_t block = 0;
  Tensor reduced;          // P'_l, M'_l × C
  Tensor direct;           // P_l, M_l × C
  Tensor propagated;       // Y_l, M_l × C
  Tensor propagated_norm;  // Y*_l
  Tensor direct_norm;      // P*_l
  double term = 0.0;
};

struct PropagationBundle {
  std::vector<PropagationBlock> blocks;
};

// Mean over enabled blocks of BlockAffinityTerm(Y*_l, P*_l). P (the M_1 × C
// logits) lives on the block-1 token grid of `attention`. When `bundle` is
// non-null it receives every intermediate.
Var AffinityLoss(const AttentionVars& attention, Var logits,
                 const LossConfig& cfg, PropagationBundle* bundle = nullptr);
double AffinityLoss(const AttentionStack& attention, const Tensor& logits,
                    const LossConfig& cfg, PropagationBundle* bundle = nullptr);

// L = L_seg + α · L_aff.
double TotalLoss(double l_seg, double l_aff, double alpha);
Var TotalLoss(Var l_seg, Var l_aff, double alpha);

}  // namespace sparseseg

#endif  // SPARSESEG_LOSSES_H_
