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
#ifndef SPARSESEG_SYNTHETIC_DATA_H_
#define SPARSESEG_SYNTHETIC_DATA_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

#include "sparseseg/labels.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

enum class ShapeKind { kRectangle, kEllipse, kTriangle };

struct ObjectDesc {
  ShapeKind kind = ShapeKind::kRectangle;
  double center_x = 0.0, center_y = 0.0;
  // Half extents for rectangles/ellipses; circumradius for triangles.
  double size_x = 0.0, size_y = 0.0;
  // Triangle vertex angles in radians.
  std::array<double, 3> angles = {0.0, 0.0, 0.0};
  std::uint8_t label = 1;
};

struct Scene {
  Tensor image;      // H×W×3, multiples of 1/255 in [0, 1]
  LabelGrid mask;    // dense labels, background = 0
  std::vector<ObjectDesc> objects;  // in drawing order
};

// Per-class base color; class 0 is the background base tone.
std::array<double, 3> ClassColor(std::size_t label, std::size_t num_classes);

// Draws 1..max_objects shapes of random classes in 1..C−1 over a textured
// background. Later shapes occlude earlier ones; each placement is retried
// until every declared object keeps at least one visible pixel. Throws
// ValidationError on bad arguments and GenerationError if placement keeps
// failing.
Scene GenerateScene(std::uint64_t seed, std::size_t width, std::size_t height,
                    std::size_t num_classes, std::size_t max_objects);

enum class SparsifyMode { kPoint, kScribble, kFraction };

std::string_view SparsifyModeName(SparsifyMode mode);
std::optional<SparsifyMode> ParseSparsifyMode(std::string_view name);

struct SparsifySpec {
  SparsifyMode mode = SparsifyMode::kPoint;
  // point mode
  std::size_t points_per_object = 1;
  // scribble mode
  std::size_t scribble_length = 24;
  std::size_t scribble_width = 3;
  // fraction mode, in (0, 1]
  double keep_fraction = 1.0;

  void Validate() const;
};

// Labeled regions used by Sparsify: every 4-connected component of each
// object class, plus all background pixels as one region. Each entry lists
// flat pixel indices in ascending order.
std::vector<std::vector<std::size_t>> AnnotationRegions(const LabelGrid& mask);

// Keeps a sparse subset of `mask` and marks the rest kIgnoreLabel.
//   point:    k pixels per region, drawn from its interior (pixels whose four
//             neighbors are in the region) when it has one; regions with
//             fewer than k candidates keep all of them.
//   scribble: per region, a direction-persistent random walk of the given
//             length over interior pixels, dilated by a width×width square
//             and clipped to the region.
//   fraction: every labeled pixel kept independently with probability p.
SparseLabelMap Sparsify(const LabelGrid& mask, const SparsifySpec& spec,
                        std::uint64_t seed);

// Mirrors the grid left-right.
LabelGrid FlipHorizontal(const LabelGrid& grid);
// Mirrors an H×W×C image left-right.
Tensor FlipHorizontal(const Tensor& image);

struct Sample {
  Tensor image;
  LabelGrid dense;
  SparseLabelMap sparse;
};

struct DatasetSpec {
  std::size_t count = 200;
  std::uint64_t seed = 1;
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t num_classes = 5;
  std::size_t max_objects = 3;
  SparsifySpec sparsify;
};

// Scene i uses seed MixSeed(spec.seed, 2i) and is sparsified with
// MixSeed(spec.seed, 2i + 1).
std::vector<Sample> MakeDataset(const DatasetSpec& spec);

// Layout: images/NNNN.ppm, masks/NNNN.pgm, sparse/NNNN.pgm and meta.json.
void WriteDataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                  const std::vector<Sample>& samples);
std::vector<Sample> LoadDataset(const std::filesystem::path& dir);
DatasetSpec LoadDatasetSpec(const std::filesystem::path& dir);

}  // namespace sparseseg

#endif  // SPARSESEG_SYNTHETIC_DATA_H_
