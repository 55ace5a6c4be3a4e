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
#include "sparseseg/tensor.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "sparseseg/errors.h"

namespace sparseseg {
namespace {

constexpr char kMagic[4] = {'S', 'A', 'S', 'T'};
constexpr std::uint8_t kFormatVersion = 1;

std::size_t ShapeProduct(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void ValidateShape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor rank must be >= 1");
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("zero extent in shape " + ShapeToString(shape));
    }
  }
}

void RequireRank(const Tensor& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         ShapeToString(t.shape()));
  }
}

void PutU64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

std::uint64_t GetU64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw IoError("truncated tensor stream");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return v;
}

// Sampling taps for one axis of a bilinear resize.
struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<double> frac;  // weight of `hi`
};

AxisTaps ComputeTaps(std::size_t in, std::size_t out) {
  AxisTaps taps;
  taps.lo.resize(out);
  taps.hi.resize(out);
  taps.frac.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double max_src = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, max_src);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    taps.lo[i] = lo;
    taps.hi[i] = std::min(lo + 1, in - 1);
    taps.frac[i] = src - static_cast<double>(lo);
  }
  return taps;
}

void RequireGrid(const Tensor& tokens, std::size_t h, std::size_t w,
                 std::size_t factor, std::string_view op) {
  RequireRank(tokens, 2, op);
  if (tokens.rows() != h * w) {
    throw DimensionError(std::string(op) + ": " + ShapeToString(tokens.shape()) +
                         " is not a " + std::to_string(h) + "x" +
                         std::to_string(w) + " token grid");
  }
  if (factor == 0 || h % factor != 0 || w % factor != 0) {
    throw ConfigError(std::string(op) + ": pooling factor " +
                      std::to_string(factor) + " incompatible with grid " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
}

}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  ValidateShape(shape_);
  data_.assign(ShapeProduct(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  ValidateShape(shape_);
  if (ShapeProduct(shape_) != data_.size()) {
    throw DimensionError("shape " + ShapeToString(shape_) + " needs " +
                         std::to_string(ShapeProduct(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw DimensionError("FromRows: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("FromRows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + ShapeToString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void CheckFinite(const Tensor& t, std::string_view op) {
  if (!t.AllFinite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "matmul");
  RequireRank(b, 2, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner extents differ, " +
                         ShapeToString(a.shape()) + " vs " +
                         ShapeToString(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  CheckFinite(c, "matmul");
  return c;
}

Tensor MatMulTransB(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "matmul_trans_b");
  RequireRank(b, 2, "matmul_trans_b");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_trans_b: inner extents differ, " +
                         ShapeToString(a.shape()) + " vs " +
                         ShapeToString(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      c(i, j) = s;
    }
  }
  CheckFinite(c, "matmul_trans_b");
  return c;
}

Tensor MatMulTransA(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "matmul_trans_a");
  RequireRank(b, 2, "matmul_trans_a");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_trans_a: inner extents differ, " +
                         ShapeToString(a.shape()) + "^T vs " +
                         ShapeToString(b.shape()));
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[p * m + i];
      if (av == 0.0) continue;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  CheckFinite(c, "matmul_trans_a");
  return c;
}

Tensor Transpose(const Tensor& a) {
  RequireRank(a, 2, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

Tensor SoftmaxRows(const Tensor& x) {
  RequireRank(x, 2, "softmax_rows");
  CheckFinite(x, "softmax_rows input");
  Tensor y(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double* in = x.data().data() + r * n;
    double* out = y.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (std::size_t c = 0; c < n; ++c) out[c] /= sum;
  }
  return y;
}

Tensor SoftmaxRowsBackward(const Tensor& y, const Tensor& grad_y) {
  if (y.shape() != grad_y.shape()) {
    throw DimensionError("softmax_rows backward: " + ShapeToString(y.shape()) +
                         " vs " + ShapeToString(grad_y.shape()));
  }
  Tensor gx(y.shape());
  const std::size_t n = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    double dot = 0.0;
    for (std::size_t c = 0; c < n; ++c) dot += y(r, c) * grad_y(r, c);
    for (std::size_t c = 0; c < n; ++c) {
      gx(r, c) = y(r, c) * (grad_y(r, c) - dot);
    }
  }
  return gx;
}

Tensor BilinearResize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  RequireRank(x, 3, "bilinear_resize");
  if (out_h == 0 || out_w == 0) {
    throw DimensionError("bilinear_resize: zero output extent " +
                         std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t in_h = x.dim(0), in_w = x.dim(1), ch = x.dim(2);
  if (in_h == out_h && in_w == out_w) return x;
  const AxisTaps ty = ComputeTaps(in_h, out_h);
  const AxisTaps tx = ComputeTaps(in_w, out_w);
  Tensor y({out_h, out_w, ch});
  const double* src = x.data().data();
  double* dst = y.data().data();
  for (std::size_t i = 0; i < out_h; ++i) {
    const double fy = ty.frac[i];
    const double* row0 = src + ty.lo[i] * in_w * ch;
    const double* row1 = src + ty.hi[i] * in_w * ch;
    for (std::size_t j = 0; j < out_w; ++j) {
      const double fx = tx.frac[j];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      const double* p00 = row0 + tx.lo[j] * ch;
      const double* p01 = row0 + tx.hi[j] * ch;
      const double* p10 = row1 + tx.lo[j] * ch;
      const double* p11 = row1 + tx.hi[j] * ch;
      double* out = dst + (i * out_w + j) * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        out[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  }
  CheckFinite(y, "bilinear_resize");
  return y;
}

Tensor BilinearResizeBackward(const Tensor& grad, std::size_t in_h,
                              std::size_t in_w) {
  RequireRank(grad, 3, "bilinear_resize backward");
  const std::size_t out_h = grad.dim(0), out_w = grad.dim(1), ch = grad.dim(2);
  if (in_h == out_h && in_w == out_w) return grad;
  const AxisTaps ty = ComputeTaps(in_h, out_h);
  const AxisTaps tx = ComputeTaps(in_w, out_w);
  Tensor gx({in_h, in_w, ch});
  double* dst = gx.data().data();
  const double* g = grad.data().data();
  for (std::size_t i = 0; i < out_h; ++i) {
    const double fy = ty.frac[i];
    double* row0 = dst + ty.lo[i] * in_w * ch;
    double* row1 = dst + ty.hi[i] * in_w * ch;
    for (std::size_t j = 0; j < out_w; ++j) {
      const double fx = tx.frac[j];
      const double w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
      const double w10 = fy * (1 - fx), w11 = fy * fx;
      const double* gin = g + (i * out_w + j) * ch;
      double* p00 = row0 + tx.lo[j] * ch;
      double* p01 = row0 + tx.hi[j] * ch;
      double* p10 = row1 + tx.lo[j] * ch;
      double* p11 = row1 + tx.hi[j] * ch;
      for (std::size_t c = 0; c < ch; ++c) {
        p00[c] += w00 * gin[c];
        p01[c] += w01 * gin[c];
        p10[c] += w10 * gin[c];
        p11[c] += w11 * gin[c];
      }
    }
  }
  return gx;
}

Tensor MeanPoolGrid(const Tensor& tokens, std::size_t h, std::size_t w,
                    std::size_t factor) {
  RequireGrid(tokens, h, w, factor, "mean_pool_grid");
  if (factor == 1) return tokens;
  const std::size_t oh = h / factor, ow = w / factor, d = tokens.cols();
  Tensor out({oh * ow, d});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t dst_row = (y / factor) * ow + x / factor;
      for (std::size_t c = 0; c < d; ++c) {
        out(dst_row, c) += inv * tokens(y * w + x, c);
      }
    }
  }
  return out;
}

Tensor MeanPoolGridBackward(const Tensor& grad, std::size_t h, std::size_t w,
                            std::size_t factor) {
  if (factor == 1) return grad;
  const std::size_t ow = w / factor, d = grad.cols();
  Tensor out({h * w, d});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src_row = (y / factor) * ow + x / factor;
      for (std::size_t c = 0; c < d; ++c) {
        out(y * w + x, c) = inv * grad(src_row, c);
      }
    }
  }
  return out;
}

void WriteTensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  out.put(static_cast<char>(kFormatVersion));
  out.put(static_cast<char>(t.rank()));
  for (std::size_t e : t.shape()) PutU64(out, e);
  for (double v : t.data()) PutU64(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw IoError("failed writing tensor");
}

Tensor ReadTensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw IoError("bad tensor magic");
  }
  const int version = in.get();
  if (version != kFormatVersion) {
    throw IoError("unsupported tensor version " + std::to_string(version));
  }
  const int rank = in.get();
  if (rank <= 0) throw IoError("bad tensor rank");
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& e : shape) e = GetU64(in);
  ValidateShape(shape);
  std::vector<double> data(ShapeProduct(shape));
  for (auto& v : data) v = std::bit_cast<double>(GetU64(in));
  return Tensor(std::move(shape), std::move(data));
}

void SaveTensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  WriteTensor(out, t);
}

Tensor LoadTensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return ReadTensor(in);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string ToCsv(const Tensor& t) {
  RequireRank(t, 2, "to_csv");
  std::ostringstream os;
  os.precision(17);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (c) os << ',';
      os << t(r, c);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace sparseseg
