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
#include "sparseseg/model.h"

#include <fstream>
#include <sstream>
#include <string>

#include "sparseseg/errors.h"
#include "sparseseg/rng.h"

namespace sparseseg {
namespace {

constexpr char kCheckpointMagic[] = "SASCKPT 1";

}  // namespace

ParameterMap InitModelParameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.Validate();
  Rng enc_rng = Rng::Derive(seed, 1);
  Rng head_rng = Rng::Derive(seed, 2);
  ParameterMap params = InitEncoderParameters(cfg.encoder, enc_rng);
  params.merge(InitHeadParameters(cfg.encoder, cfg.head, head_rng));
  return params;
}

ModelOutput ModelForward(Tape& tape, const Tensor& image, const ModelConfig& cfg,
                         const VarMap& params) {
  ModelOutput out;
  out.encoder = EncoderForward(tape, image, cfg.encoder, params);
  out.logits = Decode(out.encoder.features, cfg.encoder, cfg.head, params);
  return out;
}

LabelGrid PredictLabels(const Tensor& logits, const ModelConfig& cfg) {
  const std::size_t gh = cfg.encoder.GridHeight(0);
  const std::size_t gw = cfg.encoder.GridWidth(0);
  if (logits.rank() != 2 || logits.rows() != gh * gw) {
    throw DimensionError("predict: logits " + ShapeToString(logits.shape()) +
                         " do not match the " + std::to_string(gh) + "x" +
                         std::to_string(gw) + " patch grid");
  }
  const std::size_t p = cfg.encoder.patch_size;
  LabelGrid out(cfg.encoder.image_height, cfg.encoder.image_width, 0);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      const std::size_t row = (y / p) * gw + x / p;
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c) {
        if (logits(row, c) > logits(row, best)) best = c;
      }
      out.at(y, x) = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

LabelGrid Predict(const Tensor& image, const ModelConfig& cfg,
                  const ParameterMap& params) {
  Tape tape;
  VarMap vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.Constant(value));
  return PredictLabels(ModelForward(tape, image, cfg, vars).logits.value(), cfg);
}

void WriteCheckpoint(std::ostream& out, const ParameterMap& params) {
  std::ostringstream blobs;
  std::ostringstream index;
  index << kCheckpointMagic << '\n' << params.size() << '\n';
  for (const auto& [name, value] : params) {
    index << name << ' ' << static_cast<std::uint64_t>(blobs.tellp()) << ' '
          << value.rank();
    for (std::size_t e : value.shape()) index << ' ' << e;
    index << '\n';
    WriteTensor(blobs, value);
  }
  index << "END\n";
  out << index.str() << blobs.str();
  if (!out) throw IoError("failed writing checkpoint");
}

ParameterMap ReadCheckpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw CheckpointError("not a checkpoint (bad header)");
  }
  std::size_t count = 0;
  if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint index");
  try {
    count = std::stoul(line);
  } catch (const std::exception&) {
    throw CheckpointError("bad tensor count '" + line + "'");
  }
  struct Entry {
    std::string name;
    std::uint64_t offset;
    Shape shape;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw CheckpointError("truncated checkpoint index");
    std::istringstream ls(line);
    Entry e;
    std::size_t rank = 0;
    if (!(ls >> e.name >> e.offset >> rank)) {
      throw CheckpointError("bad index line '" + line + "'");
    }
    e.shape.resize(rank);
    for (auto& d : e.shape) {
      if (!(ls >> d)) throw CheckpointError("bad index line '" + line + "'");
    }
    entries.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "END") {
    throw CheckpointError("missing END after checkpoint index");
  }
  const std::string blobs((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  ParameterMap params;
  for (const Entry& e : entries) {
    if (e.offset >= blobs.size()) {
      throw CheckpointError("offset out of range for " + e.name);
    }
    std::istringstream blob(blobs.substr(e.offset));
    Tensor t;
    try {
      t = ReadTensor(blob);
    } catch (const IoError& err) {
      throw CheckpointError(e.name + ": " + err.what());
    }
    if (t.shape() != e.shape) {
      throw CheckpointError("index shape of " + e.name +
                            " disagrees with stored tensor");
    }
    params.emplace(e.name, std::move(t));
  }
  return params;
}

void SaveCheckpoint(const std::filesystem::path& path,
                    const ParameterMap& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  WriteCheckpoint(out, params);
}

ParameterMap LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ReadCheckpoint(in);
  } catch (const Error& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

void CheckCompatible(const ParameterMap& params, const ModelConfig& cfg) {
  const ParameterMap expected = InitModelParameters(cfg, 0);
  for (const auto& [name, value] : expected) {
    const auto it = params.find(name);
    if (it == params.end()) throw CheckpointError("checkpoint lacks " + name);
    if (it->second.shape() != value.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " +
                            ShapeToString(it->second.shape()) + ", config " +
                            ShapeToString(value.shape()));
    }
  }
  for (const auto& [name, value] : params) {
    if (!expected.contains(name)) {
      throw CheckpointError("unexpected tensor " + name + " in checkpoint");
    }
  }
}

}  // namespace sparseseg
