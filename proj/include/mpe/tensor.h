// Copyright 2026 The MPE Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MPE_TENSOR_H_
#define MPE_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mpe {

// Dense row-major array of doubles. Everything the autodiff tape touches is
// rank 2 (vectors are 1 x n rows, scalars 1 x 1), but the container itself
// carries an arbitrary shape so serialized files can round-trip any rank.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<size_t> shape, double fill = 0.0);
  Tensor(std::vector<size_t> shape, std::vector<double> values);

  static Tensor Matrix(size_t rows, size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor Row(std::initializer_list<double> values);
  static Tensor Row(std::span<const double> values);
  static Tensor Scalar(double v) { return Tensor({1, 1}, v); }
  // Builds a matrix from nested rows; every row must have the same length.
  static Tensor FromRows(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rank-2 view. Rank 1 is treated as a single row.
  size_t rows() const;
  size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(size_t r) const {
    return {data_.data() + r * cols(), cols()};
  }

  void Fill(double v);
  bool AllFinite() const;
  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }

  // "[2x3]" style description used in error messages.
  std::string ShapeString() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<size_t> shape_;
  std::vector<double> data_;
};

// Binary tensor format: an ASCII header line "MPET v1 dims=<d0,d1,...>"
// followed by the values as little-endian IEEE-754 doubles.
void WriteTensor(std::ostream& out, const Tensor& t);
Tensor ReadTensor(std::istream& in);
void SaveTensor(const std::string& path, const Tensor& t);
Tensor LoadTensor(const std::string& path);

// Little-endian double I/O shared with the embedding file format.
void WriteDoublesLE(std::ostream& out, std::span<const double> values);
void ReadDoublesLE(std::istream& in, std::span<double> values);

}  // namespace mpe

#endif  // MPE_TENSOR_H_
