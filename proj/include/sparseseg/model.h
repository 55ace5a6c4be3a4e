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
#ifndef SPARSESEG_MODEL_H_
#define SPARSESEG_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "sparseseg/autodiff.h"
#include "sparseseg/encoder.h"
#include "sparseseg/labels.h"
#include "sparseseg/seg_head.h"

namespace sparseseg {

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;

  void Validate() const {
    encoder.Validate();
    head.Validate();
  }
};

ParameterMap InitModelParameters(const ModelConfig& cfg, std::uint64_t seed);

struct ModelOutput {
  Var logits;  // M_1 × C
  EncoderOutput encoder;
};

ModelOutput ModelForward(Tape& tape, const Tensor& image, const ModelConfig& cfg,
                         const VarMap& params);

// Argmax of the patch logits, nearest-neighbor upsampled to image size.
LabelGrid PredictLabels(const Tensor& logits, const ModelConfig& cfg);
LabelGrid Predict(const Tensor& image, const ModelConfig& cfg,
                  const ParameterMap& params);

// Checkpoint layout (text index followed by binary tensors):
//   "SASCKPT 1\n"
//   "<count>\n"
//   count × "<name> <offset> <rank> <extent>...\n"
//   "END\n"
//   tensor blobs in the tensor binary format; offsets are relative to the
//   first byte after "END\n".
void WriteCheckpoint(std::ostream& out, const ParameterMap& params);
ParameterMap ReadCheckpoint(std::istream& in);
void SaveCheckpoint(const std::filesystem::path& path, const ParameterMap& params);
ParameterMap LoadCheckpoint(const std::filesystem::path& path);

// Throws CheckpointError when `params` does not hold exactly the tensors
// InitModelParameters(cfg) would produce, with the same shapes.
void CheckCompatible(const ParameterMap& params, const ModelConfig& cfg);

}  // namespace sparseseg

#endif  // SPARSESEG_MODEL_H_
