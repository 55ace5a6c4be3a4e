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
#include "sparseseg/image_io.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

struct NetpbmHeader {
  std::string magic;
  std::size_t width = 0, height = 0, maxval = 0;
};

// Reads the next whitespace-delimited token, skipping '#' comments.
std::string NextToken(std::istream& in) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  return token;
}

NetpbmHeader ReadHeader(std::istream& in, const std::filesystem::path& path) {
  NetpbmHeader h;
  h.magic = NextToken(in);
  try {
    h.width = std::stoul(NextToken(in));
    h.height = std::stoul(NextToken(in));
    h.maxval = std::stoul(NextToken(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed netpbm header");
  }
  if (h.maxval != 255 || h.width == 0 || h.height == 0) {
    throw IoError(path.string() + ": only 8-bit non-empty images are supported");
  }
  return h;
}

std::ofstream OpenForWrite(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

void WritePpm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("ppm expects HxWx3, got " + ShapeToString(image.shape()));
  }
  std::ofstream out = OpenForWrite(path);
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor ReadPpm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const NetpbmHeader h = ReadHeader(in, path);
  if (h.magic != "P6") throw IoError(path.string() + ": not a binary PPM");
  std::vector<unsigned char> bytes(h.width * h.height * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()))) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  Tensor image({h.height, h.width, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = bytes[i] / 255.0;
  return image;
}

void WritePgm(const std::filesystem::path& path, const LabelGrid& grid) {
  std::ofstream out = OpenForWrite(path);
  out << "P5\n" << grid.width << ' ' << grid.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(grid.labels.data()),
            static_cast<std::streamsize>(grid.labels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

LabelGrid ReadPgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const NetpbmHeader h = ReadHeader(in, path);
  if (h.magic != "P5") throw IoError(path.string() + ": not a binary PGM");
  LabelGrid grid(h.height, h.width);
  if (!in.read(reinterpret_cast<char*>(grid.labels.data()),
               static_cast<std::streamsize>(grid.labels.size()))) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return grid;
}

}  // namespace sparseseg
