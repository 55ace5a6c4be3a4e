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
#include "sparseseg/config.h"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> SplitList(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(Trim(item));
  return out;
}

template <typename T>
T ParseNumber(const std::string& s) {
  T value{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), value);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a number, got '" + s + "'");
  }
  return value;
}

std::size_t ParseSize(const std::string& s) {
  if (!s.empty() && s[0] == '-') {
    throw std::invalid_argument("expected a nonnegative integer, got '" + s + "'");
  }
  return ParseNumber<std::size_t>(s);
}

bool ParseBool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + s + "'");
}

std::array<std::size_t, kNumBlocks> ParseBlockList(const std::string& s) {
  const auto items = SplitList(s);
  if (items.size() != kNumBlocks) {
    throw std::invalid_argument("expected " + std::to_string(kNumBlocks) +
                                " comma-separated values");
  }
  std::array<std::size_t, kNumBlocks> out{};
  for (std::size_t i = 0; i < kNumBlocks; ++i) out[i] = ParseSize(items[i]);
  return out;
}

template <typename T>
std::string Join(const T& values) {
  std::ostringstream os;
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << ", ";
    os << v;
    first = false;
  }
  return os.str();
}

// Shortest text that parses back to the same double.
std::string FormatDouble(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Getter>
Field BlockField(std::string key, Getter member) {
  return {"encoder", std::move(key),
          [member](RunConfig& c, const std::string& v) {
            const auto values = ParseBlockList(v);
            for (std::size_t i = 0; i < kNumBlocks; ++i) {
              c.model.encoder.blocks[i].*member = values[i];
            }
          },
          [member](const RunConfig& c) {
            std::vector<std::size_t> v;
            for (const auto& b : c.model.encoder.blocks) v.push_back(b.*member);
            return Join(v);
          }};
}

#define SIZE_FIELD(sec, name, expr)                                       \
  Field {                                                                 \
    sec, name,                                                            \
        [](RunConfig& c, const std::string& v) { expr = ParseSize(v); },  \
        [](const RunConfig& c) { return std::to_string(expr); }           \
  }
#define DOUBLE_FIELD(sec, name, expr)                                         \
  Field {                                                                     \
    sec, name,                                                                \
        [](RunConfig& c, const std::string& v) {                              \
          expr = ParseNumber<double>(v);                                      \
        },                                                                    \
        [](const RunConfig& c) { return FormatDouble(expr); }                 \
  }
#define PATH_FIELD(sec, name, expr)                                    \
  Field {                                                              \
    sec, name, [](RunConfig& c, const std::string& v) { expr = v; },   \
        [](const RunConfig& c) { return expr.string(); }               \
  }

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      SIZE_FIELD("encoder", "image_width", c.model.encoder.image_width),
      SIZE_FIELD("encoder", "image_height", c.model.encoder.image_height),
      SIZE_FIELD("encoder", "patch_size", c.model.encoder.patch_size),
      BlockField("num_layers", &BlockConfig::num_layers),
      BlockField("embed_dims", &BlockConfig::embed_dim),
      BlockField("reductions", &BlockConfig::reduction),
      BlockField("strides", &BlockConfig::stride),
      SIZE_FIELD("encoder", "ffn_ratio", c.model.encoder.ffn_ratio),

      SIZE_FIELD("head", "num_classes", c.model.head.num_classes),
      SIZE_FIELD("head", "level_dim", c.model.head.level_dim),
      SIZE_FIELD("head", "fuse_dim", c.model.head.fuse_dim),
      Field{"head", "activation",
            [](RunConfig& c, const std::string& v) {
              c.model.head.activation = ParseBool(v);
            },
            [](const RunConfig& c) {
              return std::string(c.model.head.activation ? "true" : "false");
            }},

      DOUBLE_FIELD("loss", "alpha", c.train.loss.alpha),
      Field{"loss", "metric",
            [](RunConfig& c, const std::string& v) {
              const auto m = ParseMetric(v);
              if (!m) throw std::invalid_argument("metric must be L1, L2, KL or CE");
              c.train.loss.metric = *m;
            },
            [](const RunConfig& c) {
              return std::string(MetricName(c.train.loss.metric));
            }},
      Field{"loss", "block_mask",
            [](RunConfig& c, const std::string& v) {
              const auto items = SplitList(v);
              if (items.size() != kNumBlocks) {
                throw std::invalid_argument("block_mask needs 4 booleans");
              }
              for (std::size_t i = 0; i < kNumBlocks; ++i) {
                c.train.loss.block_mask[i] = ParseBool(items[i]);
              }
            },
            [](const RunConfig& c) {
              std::vector<int> v;
              for (bool b : c.train.loss.block_mask) v.push_back(b ? 1 : 0);
              return Join(v);
            }},
      Field{"loss", "normalization",
            [](RunConfig& c, const std::string& v) {
              if (v == "probabilities") {
                c.train.loss.normalization = NormalizationInput::kProbabilities;
              } else if (v == "logits") {
                c.train.loss.normalization = NormalizationInput::kLogits;
              } else {
                throw std::invalid_argument(
                    "normalization must be probabilities or logits");
              }
            },
            [](const RunConfig& c) {
              return std::string(c.train.loss.normalization ==
                                         NormalizationInput::kProbabilities
                                     ? "probabilities"
                                     : "logits");
            }},

      DOUBLE_FIELD("train", "learning_rate", c.train.learning_rate),
      DOUBLE_FIELD("train", "momentum", c.train.momentum),
      DOUBLE_FIELD("train", "weight_decay", c.train.weight_decay),
      Field{"train", "steps",
            [](RunConfig& c, const std::string& v) {
              c.train.steps = ParseNumber<int>(v);
            },
            [](const RunConfig& c) { return std::to_string(c.train.steps); }},
      SIZE_FIELD("train", "batch_size", c.train.batch_size),
      DOUBLE_FIELD("train", "hflip_prob", c.train.hflip_prob),
      Field{"train", "schedule",
            [](RunConfig& c, const std::string& v) {
              const auto s = ParseLrSchedule(v);
              if (!s) throw std::invalid_argument("schedule must be constant or poly");
              c.train.schedule = *s;
            },
            [](const RunConfig& c) {
              return std::string(LrScheduleName(c.train.schedule));
            }},
      DOUBLE_FIELD("train", "poly_power", c.train.poly_power),
      Field{"train", "seed",
            [](RunConfig& c, const std::string& v) {
              c.train.seed = ParseNumber<std::uint64_t>(v);
            },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},

      SIZE_FIELD("data", "train_count", c.data.count),
      SIZE_FIELD("data", "eval_count", c.eval_count),
      Field{"data", "train_seed",
            [](RunConfig& c, const std::string& v) {
              c.data.seed = ParseNumber<std::uint64_t>(v);
            },
            [](const RunConfig& c) { return std::to_string(c.data.seed); }},
      Field{"data", "eval_seed",
            [](RunConfig& c, const std::string& v) {
              c.eval_seed = ParseNumber<std::uint64_t>(v);
            },
            [](const RunConfig& c) { return std::to_string(c.eval_seed); }},
      SIZE_FIELD("data", "max_objects", c.data.max_objects),

      Field{"sparsify", "mode",
            [](RunConfig& c, const std::string& v) {
              const auto m = ParseSparsifyMode(v);
              if (!m) {
                throw std::invalid_argument("mode must be point, scribble or fraction");
              }
              c.data.sparsify.mode = *m;
            },
            [](const RunConfig& c) {
              return std::string(SparsifyModeName(c.data.sparsify.mode));
            }},
      SIZE_FIELD("sparsify", "points_per_object", c.data.sparsify.points_per_object),
      SIZE_FIELD("sparsify", "scribble_length", c.data.sparsify.scribble_length),
      SIZE_FIELD("sparsify", "scribble_width", c.data.sparsify.scribble_width),
      DOUBLE_FIELD("sparsify", "keep_fraction", c.data.sparsify.keep_fraction),

      PATH_FIELD("paths", "output_dir", c.output_dir),
      PATH_FIELD("paths", "train_dir", c.train_dir),
      PATH_FIELD("paths", "eval_dir", c.eval_dir),
      PATH_FIELD("paths", "checkpoint", c.checkpoint),

      Field{"ablation", "seeds",
            [](RunConfig& c, const std::string& v) {
              c.ablation_seeds.clear();
              for (const auto& item : SplitList(v)) {
                c.ablation_seeds.push_back(ParseNumber<std::uint64_t>(item));
              }
            },
            [](const RunConfig& c) { return Join(c.ablation_seeds); }},
  };
  return fields;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef PATH_FIELD

void SyncDerived(RunConfig& c) {
  c.data.width = c.model.encoder.image_width;
  c.data.height = c.model.encoder.image_height;
  c.data.num_classes = c.model.head.num_classes;
}

}  // namespace

std::filesystem::path RunConfig::TrainDir() const {
  return train_dir.empty() ? output_dir / "train" : train_dir;
}

std::filesystem::path RunConfig::EvalDir() const {
  return eval_dir.empty() ? output_dir / "eval" : eval_dir;
}

std::filesystem::path RunConfig::CheckpointPath() const {
  return checkpoint.empty() ? output_dir / "checkpoint.bin" : checkpoint;
}

DatasetSpec RunConfig::EvalSpec() const {
  DatasetSpec spec = data;
  spec.count = eval_count;
  spec.seed = eval_seed;
  return spec;
}

void RunConfig::Validate() const {
  model.Validate();
  train.Validate();
  data.sparsify.Validate();
  if (data.width != model.encoder.image_width ||
      data.height != model.encoder.image_height ||
      data.num_classes != model.head.num_classes) {
    throw ConfigError("data geometry disagrees with the model");
  }
  if (data.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (data.max_objects < 1) throw ConfigError("max_objects must be >= 1");
  if (ablation_seeds.empty()) throw ConfigError("ablation seeds must not be empty");
}

RunConfig ParseRunConfig(std::string_view text, std::string_view source) {
  RunConfig cfg;
  std::set<std::string> sections;
  for (const Field& f : Fields()) sections.insert(f.section);
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError(std::string(source) + ":" + std::to_string(line_no) +
                      ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = Trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = Trim(std::string_view(line).substr(1, line.size() - 2));
      if (!sections.contains(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    const std::string value = Trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) fail("key '" + key + "' outside of a section");
    const Field* field = nullptr;
    for (const Field& f : Fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) fail("unknown key '" + key + "' in [" + section + "]");
    if (!seen.insert(section + "." + key).second) {
      fail("duplicate key '" + key + "' in [" + section + "]");
    }
    try {
      field->set(cfg, value);
    } catch (const std::exception& e) {
      fail(section + "." + key + ": " + e.what());
    }
  }
  SyncDerived(cfg);
  try {
    cfg.Validate();
  } catch (const Error& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return cfg;
}

void ApplyOverrides(RunConfig& cfg, std::span<const std::string> assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    const auto dot = a.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + a + "': expected section.key=value");
    }
    const std::string section = Trim(std::string_view(a).substr(0, dot));
    const std::string key = Trim(std::string_view(a).substr(dot + 1, eq - dot - 1));
    const std::string value = Trim(std::string_view(a).substr(eq + 1));
    const Field* field = nullptr;
    for (const Field& f : Fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) throw ConfigError("override '" + a + "': unknown key");
    try {
      field->set(cfg, value);
    } catch (const std::exception& e) {
      throw ConfigError("override '" + a + "': " + e.what());
    }
  }
  SyncDerived(cfg);
  cfg.Validate();
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseRunConfig(buf.str(), path.string());
}

std::string RunConfigToText(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const Field& f : Fields()) {
    if (f.section != section) {
      if (!section.empty()) os << '\n';
      section = f.section;
      os << '[' << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace sparseseg
