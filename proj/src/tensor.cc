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

#include "mpe/tensor.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mpe/error.h"

namespace mpe {
namespace {

size_t Product(const std::vector<size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1},
                         std::multiplies<size_t>());
}

}  // namespace

Tensor::Tensor(std::vector<size_t> shape, double fill)
    : shape_(std::move(shape)), data_(Product(shape_), fill) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != Product(shape_)) {
    throw NumericError("tensor value count " + std::to_string(data_.size()) +
                       " does not match shape " + ShapeString());
  }
}

Tensor Tensor::Row(std::initializer_list<double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values));
}

Tensor Tensor::Row(std::span<const double> values) {
  return Tensor({1, values.size()},
                std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw NumericError("ragged rows in Tensor::FromRows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

size_t Tensor::rows() const {
  if (shape_.size() == 2) return shape_[0];
  if (shape_.size() == 1) return 1;
  if (shape_.empty()) return 0;
  throw NumericError("rows() on rank-" + std::to_string(shape_.size()) +
                     " tensor");
}

size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  if (shape_.empty()) return 0;
  throw NumericError("cols() on rank-" + std::to_string(shape_.size()) +
                     " tensor");
}

void Tensor::Fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::ShapeString() const {
  std::string s = "[";
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i > 0) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

void WriteDoublesLE(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    uint64_t bits = std::bit_cast<uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

void ReadDoublesLE(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw DataError("truncated float64 payload");
    }
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

void WriteTensor(std::ostream& out, const Tensor& t) {
  out << "MPET v1 dims=";
  for (size_t i = 0; i < t.rank(); ++i) {
    if (i > 0) out << ',';
    out << t.shape()[i];
  }
  out << '\n';
  WriteDoublesLE(out, t.values());
}

Tensor ReadTensor(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("missing MPET header");
  const std::string prefix = "MPET v1 dims=";
  if (header.rfind(prefix, 0) != 0) {
    throw DataError("bad MPET header: '" + header + "'");
  }
  std::vector<size_t> shape;
  std::stringstream dims(header.substr(prefix.size()));
  std::string item;
  while (std::getline(dims, item, ',')) {
    try {
      size_t pos = 0;
      unsigned long long d = std::stoull(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      shape.push_back(static_cast<size_t>(d));
    } catch (const std::exception&) {
      throw DataError("bad dimension '" + item + "' in MPET header");
    }
  }
  Tensor t(std::move(shape));
  ReadDoublesLE(in, t.values());
  return t;
}

void SaveTensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  WriteTensor(out, t);
  if (!out) throw DataError("failed writing " + path);
}

Tensor LoadTensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return ReadTensor(in);
}

}  // namespace mpe
