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
#include <cctype>
#include <cmath>
#include <string>

#include "sparseseg/errors.h"

namespace sparseseg {

std::string_view MetricName(Metric m) {
  switch (m) {
    case Metric::kL1: return "L1";
    case Metric::kL2: return "L2";
    case Metric::kKL: return "KL";
    case Metric::kCE: return "CE";
  }
  return "?";
}

std::optional<Metric> ParseMetric(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "l1") return Metric::kL1;
  if (lower == "l2") return Metric::kL2;
  if (lower == "kl") return Metric::kKL;
  if (lower == "ce") return Metric::kCE;
  return std::nullopt;
}

std::size_t LossConfig::EnabledBlocks() const {
  return static_cast<std::size_t>(
      std::count(block_mask.begin(), block_mask.end(), true));
}

void LossConfig::Validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be a finite nonnegative number");
  }
  if (alpha > 0.0 && EnabledBlocks() == 0) {
    throw ConfigError("alpha > 0 requires at least one enabled block");
  }
}

LabelGrid DownprojectLabels(const LabelGrid& pixels, std::size_t patch_size,
                            std::uint8_t ignore) {
  if (patch_size == 0 || pixels.height % patch_size != 0 ||
      pixels.width % patch_size != 0) {
    throw DimensionError("label grid " + std::to_string(pixels.height) + "x" +
                         std::to_string(pixels.width) +
                         " not divisible by patch size " +
                         std::to_string(patch_size));
  }
  const std::size_t gh = pixels.height / patch_size;
  const std::size_t gw = pixels.width / patch_size;
  LabelGrid out(gh, gw, ignore);
  for (std::size_t py = 0; py < gh; ++py) {
    for (std::size_t px = 0; px < gw; ++px) {
      int label = -1;
      bool conflict = false;
      for (std::size_t dy = 0; dy < patch_size && !conflict; ++dy) {
        for (std::size_t dx = 0; dx < patch_size; ++dx) {
          const std::uint8_t l =
              pixels.at(py * patch_size + dy, px * patch_size + dx);
          if (l == ignore) continue;
          if (label < 0) {
            label = l;
          } else if (label != l) {
            conflict = true;
            break;
          }
        }
      }
      if (label >= 0 && !conflict) out.at(py, px) = static_cast<std::uint8_t>(label);
    }
  }
  return out;
}

Var PartialCrossEntropy(Var logits, const LabelGrid& patch_labels,
                        std::uint8_t ignore) {
  return ad::SoftmaxCrossEntropy(logits, patch_labels.labels, ignore);
}

double PartialCrossEntropy(const Tensor& logits, const LabelGrid& patch_labels,
                           std::uint8_t ignore) {
  Tape tape;
  return PartialCrossEntropy(tape.Constant(logits), patch_labels, ignore)
      .value()
      .item();
}

Var Propagate(Var attention, Var reduced_probs) {
  return ad::MatMul(attention, reduced_probs);
}

Tensor Propagate(const Tensor& attention, const Tensor& reduced_probs) {
  return MatMul(attention, reduced_probs);
}

Var NormalizeCategories(Var x) { return ad::SoftmaxRows(x); }

Tensor NormalizeCategories(const Tensor& x) { return SoftmaxRows(x); }

Var BlockAffinityTerm(Var propagated_norm, Var direct_norm, Metric metric) {
  const Tensor& y = propagated_norm.value();
  if (y.shape() != direct_norm.value().shape()) {
    throw DimensionError("affinity term: " + ShapeToString(y.shape()) + " vs " +
                         ShapeToString(direct_norm.value().shape()));
  }
  const double inv_rows = 1.0 / static_cast<double>(y.rows());
  Var per_entry;
  switch (metric) {
    case Metric::kL1:
      per_entry = ad::Abs(ad::Sub(propagated_norm, direct_norm));
      break;
    case Metric::kL2:
      per_entry = ad::Square(ad::Sub(propagated_norm, direct_norm));
      break;
    case Metric::kKL:
      per_entry = ad::Mul(propagated_norm,
                          ad::Sub(ad::LogFloor(propagated_norm, kLogFloor),
                                  ad::LogFloor(direct_norm, kLogFloor)));
      break;
    case Metric::kCE:
      per_entry = ad::Scale(
          ad::Mul(propagated_norm, ad::LogFloor(direct_norm, kLogFloor)), -1.0);
      break;
  }
  return ad::Scale(ad::Sum(per_entry), inv_rows);
}

double BlockAffinityTerm(const Tensor& propagated_norm,
                         const Tensor& direct_norm, Metric metric) {
  Tape tape;
  return BlockAffinityTerm(tape.Constant(propagated_norm),
                           tape.Constant(direct_norm), metric)
      .value()
      .item();
}

Var AffinityLoss(const AttentionVars& attention, Var logits,
                 const LossConfig& cfg, PropagationBundle* bundle) {
  cfg.Validate();
  Tape& tape = *logits.tape();
  if (attention.size() != kNumBlocks) {
    throw ConfigError("affinity loss expects " + std::to_string(kNumBlocks) +
                      " attention blocks, got " +
                      std::to_string(attention.size()));
  }
  const std::size_t enabled = cfg.EnabledBlocks();
  if (enabled == 0) return tape.Constant(Tensor::Scalar(0.0));

  const std::size_t h1 = attention[0].grid_h, w1 = attention[0].grid_w;
  if (logits.value().rank() != 2 || logits.value().rows() != h1 * w1) {
    throw DimensionError("affinity loss: logits " +
                         ShapeToString(logits.value().shape()) +
                         " do not cover the " + std::to_string(h1) + "x" +
                         std::to_string(w1) + " block-1 grid");
  }
  Var source = cfg.normalization == NormalizationInput::kProbabilities
                   ? ad::SoftmaxRows(logits)
                   : logits;
  Var total;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    if (!cfg.block_mask[l]) continue;
    const auto& block = attention[l];
    Var reduced =
        ad::BilinearResizeGrid(source, h1, w1, block.reduced_h, block.reduced_w);
    Var direct =
        ad::BilinearResizeGrid(source, h1, w1, block.grid_h, block.grid_w);
    Var propagated = Propagate(block.aggregate, reduced);
    Var y_star = NormalizeCategories(propagated);
    Var p_star = NormalizeCategories(direct);
    Var term = BlockAffinityTerm(y_star, p_star, cfg.metric);
    if (bundle) {
      bundle->blocks.push_back({l, reduced.value(), direct.value(),
                                propagated.value(), y_star.value(),
                                p_star.value(), term.value().item()});
    }
    total = total.valid() ? ad::Add(total, term) : term;
  }
  return ad::Scale(total, 1.0 / static_cast<double>(enabled));
}

double AffinityLoss(const AttentionStack& attention, const Tensor& logits,
                    const LossConfig& cfg, PropagationBundle* bundle) {
  Tape tape;
  AttentionVars vars;
  for (const auto& b : attention) {
    BlockAttentionT<Var> v;
    v.grid_h = b.grid_h;
    v.grid_w = b.grid_w;
    v.reduced_h = b.reduced_h;
    v.reduced_w = b.reduced_w;
    for (const Tensor& m : b.layer_maps) v.layer_maps.push_back(tape.Constant(m));
    v.aggregate = tape.Constant(b.aggregate);
    vars.push_back(std::move(v));
  }
  return AffinityLoss(vars, tape.Constant(logits), cfg, bundle).value().item();
}

double TotalLoss(double l_seg, double l_aff, double alpha) {
  return l_seg + alpha * l_aff;
}

Var TotalLoss(Var l_seg, Var l_aff, double alpha) {
  return ad::Add(l_seg, ad::Scale(l_aff, alpha));
}

}  // namespace sparseseg
