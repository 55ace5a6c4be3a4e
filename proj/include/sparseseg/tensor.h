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
#ifndef SPARSESEG_TENSOR_H_
#define SPARSESEG_TENSOR_H_

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sparseseg {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);

// Dense row-major array of doubles. Every extent is positive and
// product(shape) == size(). A scalar is represented with shape {1}.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  // Builds a 2-D tensor from nested rows, e.g. {{1, 2}, {3, 4}}.
  static Tensor FromRows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Tensor Scalar(double value);
  static Tensor Identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors. Only meaningful for rank-2 tensors.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  // Scalar value of a single-element tensor.
  double item() const;

  // Same data, new shape with equal element count.
  Tensor Reshaped(Shape shape) const;

  bool AllFinite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws NumericError mentioning `op` when `t` holds a NaN or Inf.
void CheckFinite(const Tensor& t, std::string_view op);

// a[M×K] · b[K×N].
Tensor MatMul(const Tensor& a, const Tensor& b);
// a[M×K] · b[N×K]ᵀ.
Tensor MatMulTransB(const Tensor& a, const Tensor& b);
// a[K×M]ᵀ · b[K×N].
Tensor MatMulTransA(const Tensor& a, const Tensor& b);
Tensor Transpose(const Tensor& a);

// Row-wise softmax computed with per-row max subtraction.
Tensor SoftmaxRows(const Tensor& x);
// Vector-Jacobian product of SoftmaxRows given its output `y`.
Tensor SoftmaxRowsBackward(const Tensor& y, const Tensor& grad_y);

// Bilinear resampling of an H×W×C field with the align-corners-false
// convention: output index i samples the source at (i + 0.5)·in/out − 0.5,
// clamped to [0, in − 1].
Tensor BilinearResize(const Tensor& x, std::size_t out_h, std::size_t out_w);
// Adjoint of BilinearResize: maps a gradient on the out_h×out_w×C grid back
// to the in_h×in_w×C grid.
Tensor BilinearResizeBackward(const Tensor& grad, std::size_t in_h,
                              std::size_t in_w);

// Non-overlapping factor×factor mean pooling of an h×w grid of tokens
// stored as an (h·w)×D matrix in row-major grid order.
Tensor MeanPoolGrid(const Tensor& tokens, std::size_t h, std::size_t w,
                    std::size_t factor);
Tensor MeanPoolGridBackward(const Tensor& grad, std::size_t h, std::size_t w,
                            std::size_t factor);

// Binary format: "SAST", version byte, rank byte, rank × uint64 LE extents,
// then size() × float64 LE values.
void WriteTensor(std::ostream& out, const Tensor& t);
Tensor ReadTensor(std::istream& in);
void SaveTensor(const std::filesystem::path& path, const Tensor& t);
Tensor LoadTensor(const std::filesystem::path& path);

// CSV with one line per row; 2-D tensors only.
std::string ToCsv(const Tensor& t);

}  // namespace sparseseg

#endif  // SPARSESEG_TENSOR_H_
