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

#include "mpe/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "mpe/error.h"

namespace mpe {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RowMajor>;
using ConstMapM = Eigen::Map<const RowMajor>;

MapM AsMatrix(Tensor& t) { return MapM(t.data(), t.rows(), t.cols()); }
ConstMapM AsMatrix(const Tensor& t) { return ConstMapM(t.data(), t.rows(), t.cols()); }

Tensor ZerosLike(const Tensor& t) { return Tensor(t.shape(), 0.0); }

[[noreturn]] void ShapeFail(const char* op, const Tensor& a, const Tensor& b) {
  throw NumericError(std::string(op) + ": shape mismatch " + a.ShapeString() +
                     " vs " + b.ShapeString());
}

void RequireRank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw NumericError(std::string(op) + ": expected rank-2 operand, got " +
                       t.ShapeString());
  }
}

void RequireSame(const char* op, const Tensor& a, const Tensor& b) {
  RequireRank2(op, a);
  if (!a.SameShape(b)) ShapeFail(op, a, b);
}

Tape& TapeOf(const char* op, Var a) {
  if (!a.valid()) throw NumericError(std::string(op) + ": invalid operand");
  return *a.tape();
}

Tape& TapeOf(const char* op, Var a, Var b) {
  Tape& t = TapeOf(op, a);
  if (b.tape() != &t) throw NumericError(std::string(op) + ": operands on different tapes");
  return t;
}

// Applies f elementwise; df(x, y) gives dy/dx from input and output values.
template <typename F, typename DF>
Var Unary(const char* op, Var a, F f, DF df) {
  Tape& t = TapeOf(op, a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const size_t ai = a.index();
  return t.Record(op, std::move(y), {a}, [ai, df](Tape& tp, size_t self) {
    Tensor* ga = tp.GradBuffer(ai);
    if (ga == nullptr) return;
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(self);
    for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * df(x[i], y[i]);
  });
}

}  // namespace

Parameter::Parameter(std::string name_in, Tensor value_in, ParamGroup group_in,
                     bool trainable_in)
    : name(std::move(name_in)),
      value(std::move(value_in)),
      grad(value.shape(), 0.0),
      group(group_in),
      trainable(trainable_in) {}

const Tensor& Var::value() const { return tape_->value(index_); }

double Var::scalar() const {
  const Tensor& v = value();
  if (v.size() != 1) throw NumericError("scalar() on tensor " + v.ShapeString());
  return v[0];
}

Var Tape::Constant(Tensor value) {
  RequireRank2("constant", value);
  nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::Param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  RequireRank2("param", p.value);
  nodes_.push_back(Node{p.value, {}, nullptr, &p, grad_enabled_ && p.trainable});
  param_nodes_[&p] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(const char* op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn backward) {
  return Record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backward));
}

Var Tape::Record(const char* op, Tensor value, std::span<const Var> inputs,
                 BackwardFn backward) {
  if (!value.AllFinite()) {
    throw NumericError(std::string(op) + ": non-finite value");
  }
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw NumericError(std::string(op) + ": operand from another tape");
    needs = needs || nodes_[v.index()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr,
                        nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

Tensor* Tape::GradBuffer(size_t i) {
  Node& n = nodes_[i];
  if (!n.needs_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = ZerosLike(n.value);
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.index()];
  return n.grad.empty() ? ZerosLike(n.value) : n.grad;
}

void Tape::Backward(Var root) {
  if (root.tape() != this) throw NumericError("backward: root from another tape");
  if (root.value().size() != 1) {
    throw NumericError("backward: root must be scalar, got " + root.value().ShapeString());
  }
  for (Node& n : nodes_) n.grad = Tensor();
  Tensor* g = GradBuffer(root.index());
  if (g == nullptr) return;
  (*g)[0] = 1.0;
  for (size_t i = root.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr && n.param->trainable) {
      Tensor& pg = n.param->grad;
      for (size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
    }
  }
}

// ---------------------------------------------------------------------------

Var Add(Var a, Var b) {
  Tape& t = TapeOf("add", a, b);
  RequireSame("add", a.value(), b.value());
  Tensor y = a.value();
  for (size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  const size_t ai = a.index(), bi = b.index();
  return t.Record("add", std::move(y), {a, b}, [ai, bi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    for (size_t in : {ai, bi}) {
      if (Tensor* gi = tp.GradBuffer(in)) {
        for (size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
      }
    }
  });
}

Var Sub(Var a, Var b) {
  Tape& t = TapeOf("sub", a, b);
  RequireSame("sub", a.value(), b.value());
  Tensor y = a.value();
  for (size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  const size_t ai = a.index(), bi = b.index();
  return t.Record("sub", std::move(y), {a, b}, [ai, bi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    if (Tensor* ga = tp.GradBuffer(ai)) {
      for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var Mul(Var a, Var b) {
  Tape& t = TapeOf("mul", a, b);
  RequireSame("mul", a.value(), b.value());
  Tensor y = a.value();
  for (size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const size_t ai = a.index(), bi = b.index();
  return t.Record("mul", std::move(y), {a, b}, [ai, bi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    if (Tensor* ga = tp.GradBuffer(ai)) {
      for (size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var Scale(Var a, double s) {
  return Unary("scale", a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Var AddScalar(Var a, double s) {
  return Unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Var AddBias(Var m, Var bias) {
  Tape& t = TapeOf("add_bias", m, bias);
  const Tensor& mv = m.value();
  const Tensor& bv = bias.value();
  RequireRank2("add_bias", mv);
  if (bv.rows() != 1 || bv.cols() != mv.cols()) ShapeFail("add_bias", mv, bv);
  Tensor y = mv;
  for (size_t r = 0; r < y.rows(); ++r) {
    for (size_t c = 0; c < y.cols(); ++c) y.at(r, c) += bv[c];
  }
  const size_t mi = m.index(), bi = bias.index();
  return t.Record("add_bias", std::move(y), {m, bias}, [mi, bi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    if (Tensor* gm = tp.GradBuffer(mi)) {
      for (size_t i = 0; i < g.size(); ++i) (*gm)[i] += g[i];
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t r = 0; r < g.rows(); ++r) {
        for (size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g.at(r, c);
      }
    }
  });
}

Var AddN(std::span<const Var> terms) {
  if (terms.empty()) throw NumericError("add_n: no operands");
  Tape& t = TapeOf("add_n", terms[0]);
  Tensor y = terms[0].value();
  RequireRank2("add_n", y);
  for (size_t k = 1; k < terms.size(); ++k) {
    RequireSame("add_n", y, terms[k].value());
    const Tensor& v = terms[k].value();
    for (size_t i = 0; i < y.size(); ++i) y[i] += v[i];
  }
  std::vector<size_t> idx;
  for (const Var& v : terms) idx.push_back(v.index());
  return t.Record("add_n", std::move(y), terms, [idx](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    for (size_t in : idx) {
      if (Tensor* gi = tp.GradBuffer(in)) {
        for (size_t i = 0; i < g.size(); ++i) (*gi)[i] += g[i];
      }
    }
  });
}

Var MatMul(Var a, Var b) {
  Tape& t = TapeOf("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  RequireRank2("matmul", av);
  RequireRank2("matmul", bv);
  if (av.cols() != bv.rows()) ShapeFail("matmul", av, bv);
  Tensor y = Tensor::Matrix(av.rows(), bv.cols());
  AsMatrix(y).noalias() = AsMatrix(av) * AsMatrix(bv);
  const size_t ai = a.index(), bi = b.index();
  return t.Record("matmul", std::move(y), {a, b}, [ai, bi](Tape& tp, size_t self) {
    ConstMapM g = AsMatrix(tp.OutputGrad(self));
    if (Tensor* ga = tp.GradBuffer(ai)) {
      AsMatrix(*ga).noalias() += g * AsMatrix(tp.value(bi)).transpose();
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      AsMatrix(*gb).noalias() += AsMatrix(tp.value(ai)).transpose() * g;
    }
  });
}

Var Transpose(Var a) {
  Tape& t = TapeOf("transpose", a);
  const Tensor& av = a.value();
  RequireRank2("transpose", av);
  Tensor y = Tensor::Matrix(av.cols(), av.rows());
  AsMatrix(y) = AsMatrix(av).transpose();
  const size_t ai = a.index();
  return t.Record("transpose", std::move(y), {a}, [ai](Tape& tp, size_t self) {
    if (Tensor* ga = tp.GradBuffer(ai)) {
      AsMatrix(*ga) += AsMatrix(tp.OutputGrad(self)).transpose();
    }
  });
}

Var Exp(Var a) {
  return Unary("exp", a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var Log(Var a) {
  for (double v : a.value().values()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive argument");
  }
  return Unary("log", a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Var Abs(Var a) {
  for (double v : a.value().values()) {
    if (v == 0.0) TapeOf("abs", a).NoteKink();
  }
  return Unary("abs", a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var Relu(Var a) {
  for (double v : a.value().values()) {
    if (v == 0.0) TapeOf("relu", a).NoteKink();
  }
  return Unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Maximum(Var a, Var b) {
  Tape& t = TapeOf("maximum", a, b);
  RequireSame("maximum", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (size_t i = 0; i < y.size(); ++i) {
    if (av[i] == bv[i]) t.NoteKink();
    y[i] = std::max(av[i], bv[i]);
  }
  const size_t ai = a.index(), bi = b.index();
  // Ties route the gradient to the first operand.
  return t.Record("maximum", std::move(y), {a, b}, [ai, bi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    Tensor* ga = tp.GradBuffer(ai);
    Tensor* gb = tp.GradBuffer(bi);
    for (size_t i = 0; i < g.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) (*ga)[i] += g[i];
      } else if (gb) {
        (*gb)[i] += g[i];
      }
    }
  });
}

Var Sum(Var a) {
  Tape& t = TapeOf("sum", a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const size_t ai = a.index();
  return t.Record("sum", Tensor::Scalar(s), {a}, [ai](Tape& tp, size_t self) {
    if (Tensor* ga = tp.GradBuffer(ai)) {
      const double g = tp.OutputGrad(self)[0];
      for (double& v : ga->values()) v += g;
    }
  });
}

Var Mean(Var a) {
  const size_t n = a.value().size();
  if (n == 0) throw NumericError("mean: empty operand");
  return Scale(Sum(a), 1.0 / static_cast<double>(n));
}

Var Dot(Var a, Var b) {
  Tape& t = TapeOf("dot", a, b);
  RequireSame("dot", a.value(), b.value());
  double s = 0.0;
  for (size_t i = 0; i < a.value().size(); ++i) s += a.value()[i] * b.value()[i];
  const size_t ai = a.index(), bi = b.index();
  return t.Record("dot", Tensor::Scalar(s), {a, b}, [ai, bi](Tape& tp, size_t self) {
    const double g = tp.OutputGrad(self)[0];
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    if (Tensor* ga = tp.GradBuffer(ai)) {
      for (size_t i = 0; i < av.size(); ++i) (*ga)[i] += g * bv[i];
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t i = 0; i < bv.size(); ++i) (*gb)[i] += g * av[i];
    }
  });
}

Var SquaredNorm(Var a) {
  Tape& t = TapeOf("squared_norm", a);
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const size_t ai = a.index();
  return t.Record("squared_norm", Tensor::Scalar(s), {a}, [ai](Tape& tp, size_t self) {
    if (Tensor* ga = tp.GradBuffer(ai)) {
      const double g = tp.OutputGrad(self)[0];
      const Tensor& av = tp.value(ai);
      for (size_t i = 0; i < av.size(); ++i) (*ga)[i] += 2.0 * g * av[i];
    }
  });
}

Var Norm(Var a) {
  Tape& t = TapeOf("norm", a);
  double s = 0.0;
  for (double v : a.value().values()) s += v * v;
  const double n = std::sqrt(s);
  if (n == 0.0) t.NoteKink();
  const size_t ai = a.index();
  return t.Record("norm", Tensor::Scalar(n), {a}, [ai](Tape& tp, size_t self) {
    Tensor* ga = tp.GradBuffer(ai);
    const double n = tp.value(self)[0];
    if (ga == nullptr || n == 0.0) return;
    const double g = tp.OutputGrad(self)[0];
    const Tensor& av = tp.value(ai);
    for (size_t i = 0; i < av.size(); ++i) (*ga)[i] += g * av[i] / n;
  });
}

Var Cosine(Var a, Var b) {
  Tape& t = TapeOf("cosine", a, b);
  RequireSame("cosine", a.value(), b.value());
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < av.size(); ++i) {
    ab += av[i] * bv[i];
    aa += av[i] * av[i];
    bb += bv[i] * bv[i];
  }
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const bool degenerate = na == 0.0 || nb == 0.0;
  if (degenerate) t.NoteKink();
  const double c = degenerate ? 0.0 : ab / (na * nb);
  const size_t ai = a.index(), bi = b.index();
  return t.Record("cosine", Tensor::Scalar(c), {a, b},
                  [ai, bi, na, nb, c, degenerate](Tape& tp, size_t self) {
    if (degenerate) return;
    const double g = tp.OutputGrad(self)[0];
    const Tensor& av = tp.value(ai);
    const Tensor& bv = tp.value(bi);
    // d cos / da = b/(|a||b|) - cos * a/|a|^2
    if (Tensor* ga = tp.GradBuffer(ai)) {
      for (size_t i = 0; i < av.size(); ++i) {
        (*ga)[i] += g * (bv[i] / (na * nb) - c * av[i] / (na * na));
      }
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t i = 0; i < bv.size(); ++i) {
        (*gb)[i] += g * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
      }
    }
  });
}

Var Softmax(Var a) {
  Tape& t = TapeOf("softmax", a);
  const Tensor& x = a.value();
  if (x.empty()) throw NumericError("softmax: empty operand");
  const double m = *std::max_element(x.values().begin(), x.values().end());
  Tensor y(x.shape());
  double z = 0.0;
  for (size_t i = 0; i < x.size(); ++i) z += (y[i] = std::exp(x[i] - m));
  for (double& v : y.values()) v /= z;
  const size_t ai = a.index();
  return t.Record("softmax", std::move(y), {a}, [ai](Tape& tp, size_t self) {
    Tensor* ga = tp.GradBuffer(ai);
    if (ga == nullptr) return;
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& y = tp.value(self);
    double gy = 0.0;
    for (size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
    for (size_t i = 0; i < y.size(); ++i) (*ga)[i] += y[i] * (g[i] - gy);
  });
}

Var LogSoftmax(Var a) {
  Tape& t = TapeOf("log_softmax", a);
  const Tensor& x = a.value();
  if (x.empty()) throw NumericError("log_softmax: empty operand");
  const double m = *std::max_element(x.values().begin(), x.values().end());
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  Tensor y(x.shape());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] - lse;
  const size_t ai = a.index();
  return t.Record("log_softmax", std::move(y), {a}, [ai](Tape& tp, size_t self) {
    Tensor* ga = tp.GradBuffer(ai);
    if (ga == nullptr) return;
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& y = tp.value(self);
    double gs = 0.0;
    for (double v : g.values()) gs += v;
    for (size_t i = 0; i < y.size(); ++i) (*ga)[i] += g[i] - std::exp(y[i]) * gs;
  });
}

Var LogSumExp(Var a) {
  Tape& t = TapeOf("log_sum_exp", a);
  const Tensor& x = a.value();
  if (x.empty()) throw NumericError("log_sum_exp: empty operand");
  const double m = *std::max_element(x.values().begin(), x.values().end());
  double z = 0.0;
  for (double v : x.values()) z += std::exp(v - m);
  const double lse = m + std::log(z);
  const size_t ai = a.index();
  return t.Record("log_sum_exp", Tensor::Scalar(lse), {a}, [ai](Tape& tp, size_t self) {
    Tensor* ga = tp.GradBuffer(ai);
    if (ga == nullptr) return;
    const double g = tp.OutputGrad(self)[0];
    const double lse = tp.value(self)[0];
    const Tensor& x = tp.value(ai);
    for (size_t i = 0; i < x.size(); ++i) (*ga)[i] += g * std::exp(x[i] - lse);
  });
}

Var Pick(Var a, size_t flat_index) {
  Tape& t = TapeOf("pick", a);
  if (flat_index >= a.value().size()) {
    throw NumericError("pick: index " + std::to_string(flat_index) + " outside " +
                       a.value().ShapeString());
  }
  const size_t ai = a.index();
  return t.Record("pick", Tensor::Scalar(a.value()[flat_index]), {a},
                  [ai, flat_index](Tape& tp, size_t self) {
    if (Tensor* ga = tp.GradBuffer(ai)) (*ga)[flat_index] += tp.OutputGrad(self)[0];
  });
}

Var Row(Var m, size_t r) {
  const size_t rows[] = {r};
  return GatherRows(m, rows);
}

Var GatherRows(Var m, std::span<const size_t> rows) {
  Tape& t = TapeOf("gather_rows", m);
  const Tensor& mv = m.value();
  RequireRank2("gather_rows", mv);
  const size_t c = mv.cols();
  Tensor y = Tensor::Matrix(rows.size(), c);
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= mv.rows()) {
      throw NumericError("gather_rows: row " + std::to_string(rows[i]) + " outside " +
                         mv.ShapeString());
    }
    std::copy_n(mv.row(rows[i]).begin(), c, y.row(i).begin());
  }
  const size_t mi = m.index();
  std::vector<size_t> idx(rows.begin(), rows.end());
  return t.Record("gather_rows", std::move(y), {m}, [mi, idx](Tape& tp, size_t self) {
    Tensor* gm = tp.GradBuffer(mi);
    if (gm == nullptr) return;
    const Tensor& g = tp.OutputGrad(self);
    for (size_t i = 0; i < idx.size(); ++i) {
      auto src = g.row(i);
      auto dst = gm->row(idx[i]);
      for (size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var Concat(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("concat: no operands");
  Tape& t = TapeOf("concat", parts[0]);
  const size_t r = parts[0].rows();
  size_t c = 0;
  for (const Var& p : parts) {
    RequireRank2("concat", p.value());
    if (p.rows() != r) ShapeFail("concat", parts[0].value(), p.value());
    c += p.cols();
  }
  Tensor y = Tensor::Matrix(r, c);
  std::vector<std::pair<size_t, size_t>> layout;  // (node, column offset)
  size_t off = 0;
  for (const Var& p : parts) {
    for (size_t i = 0; i < r; ++i) {
      std::copy_n(p.value().row(i).begin(), p.cols(), y.row(i).begin() + off);
    }
    layout.emplace_back(p.index(), off);
    off += p.cols();
  }
  return t.Record("concat", std::move(y), parts, [layout](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    for (auto [node, col] : layout) {
      Tensor* gp = tp.GradBuffer(node);
      if (gp == nullptr) continue;
      for (size_t i = 0; i < gp->rows(); ++i) {
        for (size_t j = 0; j < gp->cols(); ++j) gp->at(i, j) += g.at(i, col + j);
      }
    }
  });
}

Var StackRows(std::span<const Var> parts) {
  if (parts.empty()) throw NumericError("stack_rows: no operands");
  Tape& t = TapeOf("stack_rows", parts[0]);
  const size_t c = parts[0].cols();
  size_t r = 0;
  for (const Var& p : parts) {
    RequireRank2("stack_rows", p.value());
    if (p.cols() != c) ShapeFail("stack_rows", parts[0].value(), p.value());
    r += p.rows();
  }
  Tensor y = Tensor::Matrix(r, c);
  std::vector<std::pair<size_t, size_t>> layout;  // (node, row offset)
  size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().values().begin(), p.value().values().end(), y.data() + off * c);
    layout.emplace_back(p.index(), off);
    off += p.rows();
  }
  return t.Record("stack_rows", std::move(y), parts, [layout, c](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    for (auto [node, row] : layout) {
      Tensor* gp = tp.GradBuffer(node);
      if (gp == nullptr) continue;
      const double* src = g.data() + row * c;
      for (size_t i = 0; i < gp->size(); ++i) (*gp)[i] += src[i];
    }
  });
}

Var SquaredDistances(Var protos, Var q) {
  Tape& t = TapeOf("squared_distances", protos, q);
  const Tensor& pv = protos.value();
  const Tensor& qv = q.value();
  RequireRank2("squared_distances", pv);
  if (qv.rows() != 1 || qv.cols() != pv.cols()) ShapeFail("squared_distances", pv, qv);
  Tensor y = Tensor::Matrix(1, pv.rows());
  for (size_t i = 0; i < pv.rows(); ++i) {
    double s = 0.0;
    for (size_t j = 0; j < pv.cols(); ++j) {
      const double d = pv.at(i, j) - qv[j];
      s += d * d;
    }
    y[i] = s;
  }
  const size_t pi = protos.index(), qi = q.index();
  return t.Record("squared_distances", std::move(y), {protos, q},
                  [pi, qi](Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& pv = tp.value(pi);
    const Tensor& qv = tp.value(qi);
    Tensor* gp = tp.GradBuffer(pi);
    Tensor* gq = tp.GradBuffer(qi);
    for (size_t i = 0; i < pv.rows(); ++i) {
      for (size_t j = 0; j < pv.cols(); ++j) {
        const double d = 2.0 * g[i] * (pv.at(i, j) - qv[j]);
        if (gp) gp->at(i, j) += d;
        if (gq) (*gq)[j] -= d;
      }
    }
  });
}

Var LayerNorm(Var x, Var gain, Var bias, double eps) {
  Tape& t = TapeOf("layer_norm", x, gain);
  const Tensor& xv = x.value();
  RequireRank2("layer_norm", xv);
  const size_t r = xv.rows(), c = xv.cols();
  if (gain.rows() != 1 || gain.cols() != c) ShapeFail("layer_norm", xv, gain.value());
  if (bias.rows() != 1 || bias.cols() != c) ShapeFail("layer_norm", xv, bias.value());
  Tensor xhat = Tensor::Matrix(r, c);
  std::vector<double> inv_std(r);
  for (size_t i = 0; i < r; ++i) {
    auto row = xv.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (size_t j = 0; j < c; ++j) xhat.at(i, j) = (row[j] - mean) * inv_std[i];
  }
  Tensor y = xhat;
  for (size_t i = 0; i < r; ++i) {
    for (size_t j = 0; j < c; ++j) {
      y.at(i, j) = xhat.at(i, j) * gain.value()[j] + bias.value()[j];
    }
  }
  const size_t xi = x.index(), gi = gain.index(), bi = bias.index();
  return t.Record("layer_norm", std::move(y), {x, gain, bias},
                  [xi, gi, bi, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& tp, size_t self) {
    const Tensor& g = tp.OutputGrad(self);
    const Tensor& gv = tp.value(gi);
    const size_t r = g.rows(), c = g.cols();
    if (Tensor* gg = tp.GradBuffer(gi)) {
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) (*gg)[j] += g.at(i, j) * xhat.at(i, j);
      }
    }
    if (Tensor* gb = tp.GradBuffer(bi)) {
      for (size_t i = 0; i < r; ++i) {
        for (size_t j = 0; j < c; ++j) (*gb)[j] += g.at(i, j);
      }
    }
    if (Tensor* gx = tp.GradBuffer(xi)) {
      std::vector<double> dxhat(c);
      for (size_t i = 0; i < r; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (size_t j = 0; j < c; ++j) {
          dxhat[j] = g.at(i, j) * gv[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * xhat.at(i, j);
        }
        m1 /= static_cast<double>(c);
        m2 /= static_cast<double>(c);
        for (size_t j = 0; j < c; ++j) {
          gx->at(i, j) += inv_std[i] * (dxhat[j] - m1 - xhat.at(i, j) * m2);
        }
      }
    }
  });
}

Var Dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw NumericError("dropout: rate outside [0,1)");
  if (rate == 0.0) return x;
  Tape& t = TapeOf("dropout", x);
  const Tensor& xv = x.value();
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask(xv.shape());
  Tensor y(xv.shape());
  for (size_t i = 0; i < xv.size(); ++i) {
    mask[i] = keep(rng) ? scale : 0.0;
    y[i] = xv[i] * mask[i];
  }
  const size_t xi = x.index();
  return t.Record("dropout", std::move(y), {x},
                  [xi, mask = std::move(mask)](Tape& tp, size_t self) {
    if (Tensor* gx = tp.GradBuffer(xi)) {
      const Tensor& g = tp.OutputGrad(self);
      for (size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }
  });
}

Var SegmentAttention(Var q, Var k, Var v, std::span<const size_t> offsets,
                     size_t heads, Var offset_bias) {
  Tape& t = TapeOf("segment_attention", q, k);
  TapeOf("segment_attention", q, v);
  const bool biased = offset_bias.valid();
  if (biased) TapeOf("segment_attention", q, offset_bias);
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  RequireSame("segment_attention", qv, kv);
  RequireSame("segment_attention", qv, vv);
  const size_t total = qv.rows(), d = qv.cols();
  if (heads == 0 || d % heads != 0) {
    throw NumericError("segment_attention: width " + std::to_string(d) +
                       " not divisible by " + std::to_string(heads) + " heads");
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != total) {
    throw NumericError("segment_attention: segment offsets do not cover " +
                       std::to_string(total) + " rows");
  }
  const size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<size_t> seg(offsets.begin(), offsets.end());
  size_t window = 0;
  if (biased) {
    const Tensor& bv = offset_bias.value();
    if (bv.rows() != heads || bv.cols() % 2 == 0) {
      throw NumericError("segment_attention: offset bias " + bv.ShapeString() + " for " +
                         std::to_string(heads) + " heads");
    }
    window = bv.cols() / 2;
  }
  // Column of the bias table for query i attending to key j.
  auto bias_col = [window](Eigen::Index i, Eigen::Index j) {
    const long off = std::clamp<long>(static_cast<long>(j - i), -static_cast<long>(window),
                                      static_cast<long>(window));
    return static_cast<size_t>(off + static_cast<long>(window));
  };

  // probs[s][h] is the (len x len) attention matrix of segment s, head h.
  std::vector<std::vector<RowMajor>> probs(seg.size() - 1);
  Tensor y = Tensor::Matrix(total, d);
  ConstMapM Q = AsMatrix(qv), K = AsMatrix(kv), V = AsMatrix(vv);
  MapM Y = AsMatrix(y);
  for (size_t s = 0; s + 1 < seg.size(); ++s) {
    const size_t b = seg[s];
    if (seg[s + 1] < b) throw NumericError("segment_attention: decreasing offsets");
    const size_t len = seg[s + 1] - b;
    probs[s].resize(heads);
    if (len == 0) continue;
    for (size_t h = 0; h < heads; ++h) {
      RowMajor scores = Q.block(b, h * dh, len, dh) * K.block(b, h * dh, len, dh).transpose();
      scores *= scale;
      if (biased) {
        const Tensor& bv = offset_bias.value();
        for (Eigen::Index i = 0; i < scores.rows(); ++i) {
          for (Eigen::Index j = 0; j < scores.cols(); ++j) scores(i, j) += bv.at(h, bias_col(i, j));
        }
      }
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const double m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp();
        scores.row(i) /= scores.row(i).sum();
      }
      Y.block(b, h * dh, len, dh).noalias() = scores * V.block(b, h * dh, len, dh);
      probs[s][h] = std::move(scores);
    }
  }
  const size_t qi = q.index(), ki = k.index(), vi = v.index();
  const size_t bi = biased ? offset_bias.index() : 0;
  std::vector<Var> inputs = {q, k, v};
  if (biased) inputs.push_back(offset_bias);
  return t.Record(
      "segment_attention", std::move(y), inputs,
      [qi, ki, vi, bi, biased, bias_col, seg = std::move(seg), probs = std::move(probs), heads,
       dh, scale](Tape& tp, size_t self) {
        ConstMapM G = AsMatrix(tp.OutputGrad(self));
        ConstMapM Q = AsMatrix(tp.value(qi)), K = AsMatrix(tp.value(ki)),
                  V = AsMatrix(tp.value(vi));
        Tensor* gq = tp.GradBuffer(qi);
        Tensor* gk = tp.GradBuffer(ki);
        Tensor* gv = tp.GradBuffer(vi);
        Tensor* gb = biased ? tp.GradBuffer(bi) : nullptr;
        for (size_t s = 0; s + 1 < seg.size(); ++s) {
          const size_t b = seg[s];
          const size_t len = seg[s + 1] - b;
          if (len == 0) continue;
          for (size_t h = 0; h < heads; ++h) {
            const RowMajor& P = probs[s][h];
            auto g = G.block(b, h * dh, len, dh);
            if (gv) AsMatrix(*gv).block(b, h * dh, len, dh).noalias() += P.transpose() * g;
            if (!gq && !gk && !gb) continue;
            RowMajor dp = g * V.block(b, h * dh, len, dh).transpose();
            // Softmax Jacobian per row: dS = P .* (dP - rowsum(dP .* P)).
            Eigen::VectorXd rs = (dp.array() * P.array()).rowwise().sum();
            RowMajor ds = P.array() * (dp.colwise() - rs).array();
            if (gb) {
              for (Eigen::Index i = 0; i < ds.rows(); ++i) {
                for (Eigen::Index j = 0; j < ds.cols(); ++j) gb->at(h, bias_col(i, j)) += ds(i, j);
              }
            }
            ds *= scale;
            if (gq) {
              AsMatrix(*gq).block(b, h * dh, len, dh).noalias() +=
                  ds * K.block(b, h * dh, len, dh);
            }
            if (gk) {
              AsMatrix(*gk).block(b, h * dh, len, dh).noalias() +=
                  ds.transpose() * Q.block(b, h * dh, len, dh);
            }
          }
        }
      });
}

double ForwardBackward(const std::function<Var(Tape&)>& expr) {
  Tape tape;
  Var root = expr(tape);
  tape.Backward(root);
  return root.scalar();
}

}  // namespace mpe
