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
#include "sparseseg/attention_map.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "sparseseg/errors.h"

namespace sparseseg {

AttentionStack ComputeAttention(const Tensor& image, const ModelConfig& cfg,
                                const ParameterMap& params) {
  CheckCompatible(params, cfg);
  Tape tape;
  VarMap vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.Constant(value));
  return MaterializeAttention(
      ModelForward(tape, image, cfg, vars).encoder.attention);
}

std::size_t ReferenceToken(const EncoderConfig& cfg, std::size_t block,
                           std::size_t x, std::size_t y) {
  if (x >= cfg.image_width || y >= cfg.image_height) {
    throw ValidationError("reference point (" + std::to_string(x) + ", " +
                          std::to_string(y) + ") outside the " +
                          std::to_string(cfg.image_width) + "x" +
                          std::to_string(cfg.image_height) + " image");
  }
  const std::size_t cell_w = cfg.image_width / cfg.GridWidth(block);
  const std::size_t cell_h = cfg.image_height / cfg.GridHeight(block);
  return (y / cell_h) * cfg.GridWidth(block) + x / cell_w;
}

std::vector<Tensor> AttentionHeatmaps(const AttentionStack& attention,
                                      const EncoderConfig& cfg, std::size_t x,
                                      std::size_t y) {
  if (attention.size() != kNumBlocks) {
    throw DimensionError("expected " + std::to_string(kNumBlocks) +
                         " attention blocks");
  }
  std::vector<Tensor> maps;
  for (std::size_t l = 0; l < kNumBlocks; ++l) {
    const auto& block = attention[l];
    const std::size_t token = ReferenceToken(cfg, l, x, y);
    const Tensor& a = block.aggregate;
    Tensor row({block.reduced_h, block.reduced_w, 1});
    for (std::size_t j = 0; j < a.cols(); ++j) row[j] = a(token, j);
    const auto [lo, hi] = std::minmax_element(row.data().begin(), row.data().end());
    const double min = *lo, range = *hi - *lo;
    for (double& v : row.data()) v = range > 0.0 ? (v - min) / range : 0.5;
    Tensor up = BilinearResize(row, cfg.image_height, cfg.image_width);
    maps.push_back(up.Reshaped({cfg.image_height, cfg.image_width}));
  }
  return maps;
}

LabelGrid QuantizeHeatmap(const Tensor& heatmap) {
  if (heatmap.rank() != 2) throw DimensionError("heatmap must be H×W");
  LabelGrid out(heatmap.dim(0), heatmap.dim(1), 0);
  for (std::size_t i = 0; i < heatmap.size(); ++i) {
    out.labels[i] = static_cast<std::uint8_t>(
        std::lround(std::clamp(heatmap[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

double ClassConcentration(const Tensor& heatmap, const LabelGrid& mask,
                          std::uint8_t label) {
  if (heatmap.rank() != 2 || heatmap.dim(0) != mask.height ||
      heatmap.dim(1) != mask.width) {
    throw DimensionError("heatmap and mask extents differ");
  }
  double all = 0.0, same = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < heatmap.size(); ++i) {
    all += heatmap[i];
    if (mask.labels[i] == label) {
      same += heatmap[i];
      ++count;
    }
  }
  if (count == 0) throw ValidationError("label absent from mask");
  const double mean = all / static_cast<double>(heatmap.size());
  if (mean == 0.0) return 0.0;
  return (same / static_cast<double>(count)) / mean;
}

}  // namespace sparseseg
