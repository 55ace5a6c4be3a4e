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
#include "sparseseg/synthetic_data.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "json.hpp"
#include "sparseseg/errors.h"
#include "sparseseg/image_io.h"
#include "sparseseg/rng.h"

namespace sparseseg {
namespace {

constexpr double kPixelNoise = 0.05;
constexpr int kMaxPlacementRetries = 200;

bool Contains(const ObjectDesc& o, double x, double y) {
  const double dx = x - o.center_x, dy = y - o.center_y;
  switch (o.kind) {
    case ShapeKind::kRectangle:
      return std::abs(dx) <= o.size_x && std::abs(dy) <= o.size_y;
    case ShapeKind::kEllipse:
      return (dx * dx) / (o.size_x * o.size_x) +
                 (dy * dy) / (o.size_y * o.size_y) <=
             1.0;
    case ShapeKind::kTriangle: {
      double vx[3], vy[3];
      for (int i = 0; i < 3; ++i) {
        vx[i] = o.center_x + o.size_x * std::cos(o.angles[i]);
        vy[i] = o.center_y + o.size_y * std::sin(o.angles[i]);
      }
      bool neg = false, pos = false;
      for (int i = 0; i < 3; ++i) {
        const int j = (i + 1) % 3;
        const double cross =
            (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
        neg = neg || cross < 0;
        pos = pos || cross > 0;
      }
      return !(neg && pos);
    }
  }
  return false;
}

ObjectDesc RandomObject(Rng& rng, std::size_t width, std::size_t height,
                        std::size_t num_classes) {
  ObjectDesc o;
  o.label = static_cast<std::uint8_t>(1 + rng.UniformInt(num_classes - 1));
  o.kind = static_cast<ShapeKind>(rng.UniformInt(3));
  const double side = static_cast<double>(std::min(width, height));
  o.size_x = rng.Uniform(side / 10.0, side / 4.0);
  o.size_y = o.kind == ShapeKind::kTriangle ? o.size_x
                                            : rng.Uniform(side / 10.0, side / 4.0);
  o.center_x = rng.Uniform(o.size_x, static_cast<double>(width) - o.size_x);
  o.center_y = rng.Uniform(o.size_y, static_cast<double>(height) - o.size_y);
  const double a0 = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  const double a1 = a0 + rng.Uniform(1.6, 2.6);
  const double a2 = a1 + rng.Uniform(1.6, 2.6);
  o.angles = {a0, a1, a2};
  return o;
}

double HueChannel(double h, double s, double v, double shift) {
  const double k = std::fmod(shift + h * 6.0, 6.0);
  return v - v * s * std::max(0.0, std::min({k, 4.0 - k, 1.0}));
}

// Partial Fisher-Yates: moves `take` random elements to the front.
void ShufflePrefix(std::vector<std::size_t>& v, std::size_t take, Rng& rng) {
  for (std::size_t k = 0; k < take && k < v.size(); ++k) {
    std::swap(v[k], v[k + rng.UniformInt(v.size() - k)]);
  }
}

std::string IndexName(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04zu", i);
  return buf;
}

}  // namespace

std::array<double, 3> ClassColor(std::size_t label, std::size_t num_classes) {
  if (label == 0) return {0.5, 0.5, 0.5};
  const double hue = static_cast<double>(label - 1) /
                     static_cast<double>(std::max<std::size_t>(1, num_classes - 1));
  const double s = 0.75, v = 0.85;
  return {HueChannel(hue, s, v, 5.0), HueChannel(hue, s, v, 3.0),
          HueChannel(hue, s, v, 1.0)};
}

Scene GenerateScene(std::uint64_t seed, std::size_t width, std::size_t height,
                    std::size_t num_classes, std::size_t max_objects) {
  if (width < 16 || height < 16) {
    throw ValidationError("scene extents must be >= 16");
  }
  if (num_classes < 2 || num_classes > 255) {
    throw ValidationError("num_classes must be in [2, 255]");
  }
  if (max_objects < 1) throw ValidationError("max_objects must be >= 1");

  Rng rng(seed);
  Scene scene;
  scene.mask = LabelGrid(height, width, 0);
  std::vector<int> owner(width * height, -1);
  const std::size_t count = 1 + rng.UniformInt(max_objects);

  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementRetries && !placed; ++attempt) {
      const ObjectDesc o = RandomObject(rng, width, height, num_classes);
      std::vector<int> trial = owner;
      for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          if (Contains(o, x + 0.5, y + 0.5)) trial[y * width + x] = static_cast<int>(i);
        }
      }
      std::vector<bool> visible(i + 1, false);
      for (int id : trial) {
        if (id >= 0) visible[static_cast<std::size_t>(id)] = true;
      }
      if (std::all_of(visible.begin(), visible.end(), [](bool b) { return b; })) {
        owner = std::move(trial);
        scene.objects.push_back(o);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("could not place object " + std::to_string(i) +
                            " after " + std::to_string(kMaxPlacementRetries) +
                            " attempts (seed " + std::to_string(seed) + ")");
    }
  }

  // Background: base tone modulated by a low-frequency sinusoidal texture.
  const double fx = rng.Uniform(1.0, 3.0), fy = rng.Uniform(1.0, 3.0);
  std::array<double, 3> phase;
  for (double& p : phase) p = rng.Uniform(0.0, 2.0 * std::numbers::pi);
  scene.image = Tensor({height, width, 3});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const int id = owner[y * width + x];
      std::array<double, 3> color;
      if (id < 0) {
        color = ClassColor(0, num_classes);
        const double t = 2.0 * std::numbers::pi *
                         (fx * x / double(width) + fy * y / double(height));
        for (int c = 0; c < 3; ++c) color[c] += 0.12 * std::sin(t + phase[c]);
      } else {
        const std::uint8_t label = scene.objects[static_cast<std::size_t>(id)].label;
        scene.mask.at(y, x) = label;
        color = ClassColor(label, num_classes);
      }
      for (int c = 0; c < 3; ++c) {
        const double v = color[c] + rng.Normal(0.0, kPixelNoise);
        // 8-bit levels, so PPM files hold the exact image.
        scene.image[(y * width + x) * 3 + c] =
            std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
      }
    }
  }
  return scene;
}

std::string_view SparsifyModeName(SparsifyMode mode) {
  switch (mode) {
    case SparsifyMode::kPoint: return "point";
    case SparsifyMode::kScribble: return "scribble";
    case SparsifyMode::kFraction: return "fraction";
  }
  return "?";
}

std::optional<SparsifyMode> ParseSparsifyMode(std::string_view name) {
  if (name == "point") return SparsifyMode::kPoint;
  if (name == "scribble") return SparsifyMode::kScribble;
  if (name == "fraction") return SparsifyMode::kFraction;
  return std::nullopt;
}

void SparsifySpec::Validate() const {
  switch (mode) {
    case SparsifyMode::kPoint:
      if (points_per_object < 1) {
        throw ValidationError("points_per_object must be >= 1");
      }
      break;
    case SparsifyMode::kScribble:
      if (scribble_length < 1 || scribble_width < 1) {
        throw ValidationError("scribble length and width must be >= 1");
      }
      break;
    case SparsifyMode::kFraction:
      if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw ValidationError("keep_fraction must lie in (0, 1]");
      }
      break;
  }
}

std::vector<std::vector<std::size_t>> AnnotationRegions(const LabelGrid& mask) {
  const std::size_t w = mask.width, h = mask.height;
  std::vector<std::vector<std::size_t>> regions;
  std::vector<std::size_t> background;
  std::vector<bool> seen(mask.size(), false);
  for (std::size_t start = 0; start < mask.size(); ++start) {
    const std::uint8_t label = mask.labels[start];
    if (label == kIgnoreLabel) continue;
    if (label == 0) {
      background.push_back(start);
      continue;
    }
    if (seen[start]) continue;
    std::vector<std::size_t> component;
    std::vector<std::size_t> stack = {start};
    seen[start] = true;
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      component.push_back(p);
      const std::size_t y = p / w, x = p % w;
      const std::size_t nbrs[4] = {y > 0 ? p - w : p, y + 1 < h ? p + w : p,
                                   x > 0 ? p - 1 : p, x + 1 < w ? p + 1 : p};
      for (std::size_t q : nbrs) {
        if (q != p && !seen[q] && mask.labels[q] == label) {
          seen[q] = true;
          stack.push_back(q);
        }
      }
    }
    std::sort(component.begin(), component.end());
    regions.push_back(std::move(component));
  }
  if (!background.empty()) regions.insert(regions.begin(), std::move(background));
  return regions;
}

SparseLabelMap Sparsify(const LabelGrid& mask, const SparsifySpec& spec,
                        std::uint64_t seed) {
  spec.Validate();
  Rng rng(seed);
  SparseLabelMap out(mask.height, mask.width, kIgnoreLabel);
  if (spec.mode == SparsifyMode::kFraction) {
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (mask.labels[i] == kIgnoreLabel) continue;
      if (rng.Uniform() < spec.keep_fraction) out.labels[i] = mask.labels[i];
    }
    return out;
  }

  const std::size_t w = mask.width, h = mask.height;
  const auto regions = AnnotationRegions(mask);
  std::vector<int> region_of(mask.size(), -1);
  for (std::size_t r = 0; r < regions.size(); ++r) {
    for (std::size_t p : regions[r]) region_of[p] = static_cast<int>(r);
  }
  auto in_region = [&](long y, long x, int r) {
    return y >= 0 && x >= 0 && y < long(h) && x < long(w) &&
           region_of[std::size_t(y) * w + std::size_t(x)] == r;
  };
  auto is_interior = [&](std::size_t p, int r) {
    const long y = long(p / w), x = long(p % w);
    return in_region(y - 1, x, r) && in_region(y + 1, x, r) &&
           in_region(y, x - 1, r) && in_region(y, x + 1, r);
  };

  for (std::size_t r = 0; r < regions.size(); ++r) {
    const int rid = static_cast<int>(r);
    std::vector<std::size_t> candidates;
    for (std::size_t p : regions[r]) {
      if (is_interior(p, rid)) candidates.push_back(p);
    }
    const bool has_interior = !candidates.empty();
    if (!has_interior) candidates = regions[r];

    if (spec.mode == SparsifyMode::kPoint) {
      const std::size_t take = std::min(spec.points_per_object, candidates.size());
      ShufflePrefix(candidates, take, rng);
      for (std::size_t k = 0; k < take; ++k) {
        out.labels[candidates[k]] = mask.labels[candidates[k]];
      }
      continue;
    }

    // Scribble: direction-persistent walk over the candidate pixels.
    static constexpr int kDy[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static constexpr int kDx[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    auto walkable = [&](long y, long x) {
      if (!in_region(y, x, rid)) return false;
      const std::size_t p = std::size_t(y) * w + std::size_t(x);
      return !has_interior || is_interior(p, rid);
    };
    std::size_t pos = candidates[rng.UniformInt(candidates.size())];
    std::size_t dir = rng.UniformInt(8);
    std::vector<std::size_t> path = {pos};
    while (path.size() < spec.scribble_length) {
      if (rng.Uniform() >= 0.7) dir = rng.UniformInt(8);
      bool moved = false;
      for (int attempt = 0; attempt < 8 && !moved; ++attempt) {
        const long ny = long(pos / w) + kDy[dir];
        const long nx = long(pos % w) + kDx[dir];
        if (walkable(ny, nx)) {
          pos = std::size_t(ny) * w + std::size_t(nx);
          moved = true;
        } else {
          dir = rng.UniformInt(8);
        }
      }
      if (!moved) break;
      path.push_back(pos);
    }
    const long radius = long(spec.scribble_width - 1) / 2;
    const long extra = long(spec.scribble_width - 1) - radius;
    for (std::size_t p : path) {
      const long y = long(p / w), x = long(p % w);
      for (long dy = -radius; dy <= extra; ++dy) {
        for (long dx = -radius; dx <= extra; ++dx) {
          if (in_region(y + dy, x + dx, rid)) {
            const std::size_t q = std::size_t(y + dy) * w + std::size_t(x + dx);
            out.labels[q] = mask.labels[q];
          }
        }
      }
    }
  }
  return out;
}

LabelGrid FlipHorizontal(const LabelGrid& grid) {
  LabelGrid out = grid;
  for (std::size_t y = 0; y < grid.height; ++y) {
    for (std::size_t x = 0; x < grid.width; ++x) {
      out.at(y, x) = grid.at(y, grid.width - 1 - x);
    }
  }
  return out;
}

Tensor FlipHorizontal(const Tensor& image) {
  if (image.rank() != 3) {
    throw DimensionError("flip expects HxWxC, got " + ShapeToString(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        out[(y * w + x) * c + k] = image[(y * w + (w - 1 - x)) * c + k];
      }
    }
  }
  return out;
}

std::vector<Sample> MakeDataset(const DatasetSpec& spec) {
  spec.sparsify.Validate();
  std::vector<Sample> samples;
  samples.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    Scene scene = GenerateScene(MixSeed(spec.seed, 2 * i), spec.width,
                                spec.height, spec.num_classes, spec.max_objects);
    SparseLabelMap sparse =
        Sparsify(scene.mask, spec.sparsify, MixSeed(spec.seed, 2 * i + 1));
    samples.push_back({std::move(scene.image), std::move(scene.mask),
                       std::move(sparse)});
  }
  return samples;
}

void WriteDataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                  const std::vector<Sample>& samples) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "masks", "sparse"}) {
    fs::create_directories(dir / sub, ec);
    if (ec) {
      throw IoError("cannot create " + (dir / sub).string() + ": " + ec.message());
    }
  }
  nlohmann::ordered_json meta;
  meta["format"] = "sparseseg-dataset";
  meta["version"] = 1;
  meta["count"] = samples.size();
  meta["seed"] = spec.seed;
  meta["width"] = spec.width;
  meta["height"] = spec.height;
  meta["num_classes"] = spec.num_classes;
  meta["max_objects"] = spec.max_objects;
  meta["ignore_label"] = kIgnoreLabel;
  meta["sparsify"] = {
      {"mode", std::string(SparsifyModeName(spec.sparsify.mode))},
      {"points_per_object", spec.sparsify.points_per_object},
      {"scribble_length", spec.sparsify.scribble_length},
      {"scribble_width", spec.sparsify.scribble_width},
      {"keep_fraction", spec.sparsify.keep_fraction}};
  nlohmann::ordered_json scenes = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::string name = IndexName(i);
    WritePpm(dir / "images" / (name + ".ppm"), samples[i].image);
    WritePgm(dir / "masks" / (name + ".pgm"), samples[i].dense);
    WritePgm(dir / "sparse" / (name + ".pgm"), samples[i].sparse);
    scenes.push_back({{"index", i},
                      {"name", name},
                      {"scene_seed", MixSeed(spec.seed, 2 * i)},
                      {"sparsify_seed", MixSeed(spec.seed, 2 * i + 1)},
                      {"labeled_pixels", samples[i].sparse.CountLabeled()}});
  }
  meta["scenes"] = std::move(scenes);
  std::ofstream out(dir / "meta.json");
  if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

DatasetSpec LoadDatasetSpec(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw IoError("cannot open " + (dir / "meta.json").string());
  DatasetSpec spec;
  try {
    const auto meta = nlohmann::json::parse(in);
    spec.count = meta.at("count").get<std::size_t>();
    spec.seed = meta.at("seed").get<std::uint64_t>();
    spec.width = meta.at("width").get<std::size_t>();
    spec.height = meta.at("height").get<std::size_t>();
    spec.num_classes = meta.at("num_classes").get<std::size_t>();
    spec.max_objects = meta.at("max_objects").get<std::size_t>();
    const auto& sp = meta.at("sparsify");
    const auto mode = ParseSparsifyMode(sp.at("mode").get<std::string>());
    if (!mode) throw IoError("unknown sparsify mode");
    spec.sparsify.mode = *mode;
    spec.sparsify.points_per_object = sp.at("points_per_object").get<std::size_t>();
    spec.sparsify.scribble_length = sp.at("scribble_length").get<std::size_t>();
    spec.sparsify.scribble_width = sp.at("scribble_width").get<std::size_t>();
    spec.sparsify.keep_fraction = sp.at("keep_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  return spec;
}

std::vector<Sample> LoadDataset(const std::filesystem::path& dir) {
  const DatasetSpec spec = LoadDatasetSpec(dir);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::string name = IndexName(i);
    Sample s;
    s.image = ReadPpm(dir / "images" / (name + ".ppm"));
    s.dense = ReadPgm(dir / "masks" / (name + ".pgm"));
    s.sparse = ReadPgm(dir / "sparse" / (name + ".pgm"));
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace sparseseg
