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
#ifndef SPARSESEG_CONFIG_H_
#define SPARSESEG_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparseseg/model.h"
#include "sparseseg/synthetic_data.h"
#include "sparseseg/trainer.h"

namespace sparseseg {

// Everything a CLI run needs. Defaults reproduce the toy acceptance setup.
//
// File grammar (one item per line):
//   # comment            ; comment
//   [section]
//   key = value
// Lists are comma separated. Booleans are true/false/1/0. Unknown sections
// or keys, duplicate keys and malformed values are errors that cite the
// line number.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  // Training-set generation; width/height/num_classes follow the model.
  DatasetSpec data;
  std::size_t eval_count = 50;
  std::uint64_t eval_seed = 1001;
  std::filesystem::path output_dir = "sparseseg_out";
  // Empty means <output_dir>/train, <output_dir>/eval and
  // <output_dir>/checkpoint.bin.
  std::filesystem::path train_dir;
  std::filesystem::path eval_dir;
  std::filesystem::path checkpoint;
  std::vector<std::uint64_t> ablation_seeds = {1, 2, 3, 4, 5};

  std::filesystem::path TrainDir() const;
  std::filesystem::path EvalDir() const;
  std::filesystem::path CheckpointPath() const;
  DatasetSpec EvalSpec() const;

  // Cross-field checks (model, training, data consistency).
  void Validate() const;
};

RunConfig ParseRunConfig(std::string_view text,
                         std::string_view source = "<config>");
RunConfig LoadRunConfig(const std::filesystem::path& path);
// Applies "section.key=value" assignments in order, then re-validates.
void ApplyOverrides(RunConfig& cfg, std::span<const std::string> assignments);
// Serializes every key, so the output documents all defaults.
std::string RunConfigToText(const RunConfig& cfg);

}  // namespace sparseseg

#endif  // SPARSESEG_CONFIG_H_
