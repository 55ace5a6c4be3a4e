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
#ifndef SPARSESEG_METRICS_H_
#define SPARSESEG_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparseseg/labels.h"

namespace sparseseg {

struct MiouReport {
  // IoU per class; nullopt when the class is absent from both ground truth
  // and prediction.
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;

  std::string ToCsv() const;
  std::string ToTable() const;
};

// Rows index ground truth, columns index prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  // Adds one count per pixel whose ground truth is not `ignore`. Throws
  // DimensionError on a shape mismatch and ValidationError on a class index
  // out of range.
  void Accumulate(const LabelGrid& pred, const LabelGrid& gt,
                  std::uint8_t ignore = kIgnoreLabel);
  void Merge(const ConfusionMatrix& other);

  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t count(std::size_t gt, std::size_t pred) const {
    return counts_[gt * num_classes_ + pred];
  }
  std::uint64_t total() const;

  // IoU_c = tp / (row_c + col_c − tp); the mean skips classes whose
  // denominator is zero.
  MiouReport Miou() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

}  // namespace sparseseg

#endif  // SPARSESEG_METRICS_H_
