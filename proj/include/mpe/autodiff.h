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

#ifndef MPE_AUTODIFF_H_
#define MPE_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpe/tensor.h"

namespace mpe {

// Learning-rate group a parameter belongs to.
enum class ParamGroup { kEncoder, kPrototype };

struct Parameter {
  Parameter(std::string name, Tensor value, ParamGroup group = ParamGroup::kPrototype,
            bool trainable = true);

  void ZeroGrad() { grad.Fill(0.0); }

  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
  ParamGroup group;
  bool trainable;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
// tape is alive.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, size_t index) : tape_(tape), index_(index) {}

  Tape* tape() const { return tape_; }
  size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  size_t rows() const { return value().rows(); }
  size_t cols() const { return value().cols(); }
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  size_t index_ = 0;
};

// Reverse-mode recorder. Every op evaluates eagerly, appends a node with its
// value and a backward closure, and Backward() walks the nodes in reverse.
// A tape belongs to one thread.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, size_t self)>;

  // A tape with gradients disabled records values only (evaluation).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var Constant(Tensor value);
  // One leaf per Parameter per tape; repeated calls return the same node.
  Var Param(Parameter& p);

  // Seeds d(root)/d(root) = 1 and accumulates into Parameter::grad.
  void Backward(Var root);

  const Tensor& value(size_t i) const { return nodes_[i].value; }
  // Gradient of the last Backward() root w.r.t. node i (zeros if untouched).
  Tensor grad(Var v) const;

  // Records a new node. `inputs` decides whether the node participates in
  // backward; `op` names the primitive for error messages.
  Var Record(const char* op, Tensor value, std::initializer_list<Var> inputs,
             BackwardFn backward);
  Var Record(const char* op, Tensor value, std::span<const Var> inputs,
             BackwardFn backward);

  // Gradient buffer of node i during backward, or nullptr when node i does
  // not need a gradient.
  Tensor* GradBuffer(size_t i);
  const Tensor& OutputGrad(size_t i) const { return nodes_[i].grad; }

  // Counts evaluations exactly at a point of non-differentiability (|z| at
  // 0, ties in max). Gradient checks use it to flag kinks.
  void NoteKink() { ++kinks_; }
  size_t kink_hits() const { return kinks_; }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, size_t> param_nodes_;
  size_t kinks_ = 0;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Primitives. All operands are rank-2; shapes must agree exactly except where
// an op states otherwise. Failures raise NumericError naming the op.

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);  // elementwise
Var Scale(Var a, double s);
Var AddScalar(Var a, double s);
// Adds the 1 x c row `bias` to every row of the r x c matrix `m`.
Var AddBias(Var m, Var bias);
Var AddN(std::span<const Var> terms);

Var MatMul(Var a, Var b);
Var Transpose(Var a);

Var Exp(Var a);
Var Log(Var a);
// Subgradient at exactly zero is 0.
Var Abs(Var a);
Var Relu(Var a);
Var Maximum(Var a, Var b);

Var Sum(Var a);
Var Mean(Var a);
Var Dot(Var a, Var b);
Var SquaredNorm(Var a);
Var Norm(Var a);
// Cosine similarity of two same-shape tensors; defined as 0 when either is
// the zero vector.
Var Cosine(Var a, Var b);

// Softmax family over all elements of `a`, keeping the shape.
Var Softmax(Var a);
Var LogSoftmax(Var a);
Var LogSumExp(Var a);

Var Pick(Var a, size_t flat_index);  // 1 x 1
Var Row(Var m, size_t r);            // 1 x c
Var GatherRows(Var m, std::span<const size_t> rows);
Var Concat(std::span<const Var> parts);     // along columns
Var StackRows(std::span<const Var> parts);  // along rows

// Squared Euclidean distance from the row `q` (1 x d) to every row of
// `protos` (n x d), as a 1 x n row.
Var SquaredDistances(Var protos, Var q);

// Row-wise layer normalization with learned gain and bias rows.
Var LayerNorm(Var x, Var gain, Var bias, double eps = 1e-5);

// Inverted dropout. Identity when rate == 0.
Var Dropout(Var x, double rate, std::mt19937_64& rng);

// Multi-head scaled dot-product attention computed independently inside each
// row segment [offsets[s], offsets[s+1]). q, k, v are total x d with d
// divisible by `heads`. An optional heads x (2w + 1) `offset_bias` adds
// offset_bias[h, clamp(j - i, -w, w) + w] to the logit of query i and key j.
Var SegmentAttention(Var q, Var k, Var v, std::span<const size_t> offsets,
                     size_t heads, Var offset_bias = Var());

// Convenience wrappers over whole expressions.
double ForwardBackward(const std::function<Var(Tape&)>& expr);

}  // namespace mpe

#endif  // MPE_AUTODIFF_H_
