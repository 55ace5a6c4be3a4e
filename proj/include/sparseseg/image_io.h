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
#ifndef SPARSESEG_IMAGE_IO_H_
#define SPARSESEG_IMAGE_IO_H_

#include <filesystem>

#include "sparseseg/labels.h"
#include "sparseseg/tensor.h"

namespace sparseseg {

// Binary PPM (P6, maxval 255). The image is H×W×3 with values in [0, 1];
// values are clamped and rounded to 8 bits on write.
void WritePpm(const std::filesystem::path& path, const Tensor& image);
Tensor ReadPpm(const std::filesystem::path& path);

// Binary PGM (P5, maxval 255), one byte per cell.
void WritePgm(const std::filesystem::path& path, const LabelGrid& grid);
LabelGrid ReadPgm(const std::filesystem::path& path);

}  // namespace sparseseg

#endif  // SPARSESEG_IMAGE_IO_H_
