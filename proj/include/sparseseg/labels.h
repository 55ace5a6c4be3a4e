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
#ifndef SPARSESEG_LABELS_H_
#define SPARSESEG_LABELS_H_

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sparseseg {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Row-major H×W grid of class indices; kIgnoreLabel marks unlabeled cells.
// Used for dense masks, sparse annotations and predictions alike.
struct LabelGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelGrid() = default;
  LabelGrid(std::size_t h, std::size_t w, std::uint8_t fill = kIgnoreLabel)
      : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const {
    return labels[y * width + x];
  }
  std::size_t size() const { return labels.size(); }
  std::size_t CountLabeled() const {
    std::size_t n = 0;
    for (std::uint8_t l : labels) n += (l != kIgnoreLabel);
    return n;
  }

  friend bool operator==(const LabelGrid&, const LabelGrid&) = default;
};

// Sparse annotation at pixel resolution.
using SparseLabelMap = LabelGrid;

}  // namespace sparseseg

#endif  // SPARSESEG_LABELS_H_
