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
#include "sparseseg/metrics.h"

#include <iomanip>
#include <numeric>
#include <sstream>

#include "sparseseg/errors.h"

namespace sparseseg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs >= 1 class");
}

void ConfusionMatrix::Accumulate(const LabelGrid& pred, const LabelGrid& gt,
                                 std::uint8_t ignore) {
  if (pred.height != gt.height || pred.width != gt.width ||
      pred.size() != gt.size()) {
    throw DimensionError("accumulate: prediction " +
                         std::to_string(pred.height) + "x" +
                         std::to_string(pred.width) + " vs ground truth " +
                         std::to_string(gt.height) + "x" +
                         std::to_string(gt.width));
  }
  // Validate first so a bad input leaves the counts untouched.
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.labels[i] == ignore) continue;
    if (gt.labels[i] >= num_classes_ || pred.labels[i] >= num_classes_) {
      throw ValidationError(
          "class index out of range at pixel " + std::to_string(i) + " (gt " +
          std::to_string(gt.labels[i]) + ", pred " +
          std::to_string(pred.labels[i]) + ", classes " +
          std::to_string(num_classes_) + ")");
    }
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.labels[i] == ignore) continue;
    ++counts_[gt.labels[i] * num_classes_ + pred.labels[i]];
  }
}

void ConfusionMatrix::Merge(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) {
    throw DimensionError("merge: class counts differ");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

MiouReport ConfusionMatrix::Miou() const {
  MiouReport report;
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < num_classes_; ++k) {
      row += count(c, k);
      col += count(k, c);
    }
    const std::uint64_t tp = count(c, c);
    const std::uint64_t denom = row + col - tp;
    if (denom == 0) {
      report.per_class.push_back(std::nullopt);
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    report.per_class.push_back(iou);
    sum += iou;
    ++present;
  }
  report.miou = present ? sum / static_cast<double>(present) : 0.0;
  return report;
}

std::string MiouReport::ToCsv() const {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "class,iou\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    os << c << ',';
    if (per_class[c]) os << *per_class[c];
    os << '\n';
  }
  os << "mean," << miou << '\n';
  return os.str();
}

std::string MiouReport::ToTable() const {
  std::ostringstream os;
  os << "class    IoU(%)\n";
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    os << std::setw(5) << c << "  ";
    if (per_class[c]) {
      os << std::setw(8) << std::fixed << std::setprecision(2)
         << 100.0 * *per_class[c];
    } else {
      os << std::setw(8) << "n/a";
    }
    os << '\n';
  }
  os << " mIoU  " << std::setw(8) << std::fixed << std::setprecision(2)
     << 100.0 * miou << '\n';
  return os.str();
}

}  // namespace sparseseg
