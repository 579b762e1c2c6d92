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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "mpe/autodiff.h"
#include "mpe/error.h"
#include "mpe/gradcheck.h"
#include "mpe/tensor.h"

using namespace mpe;

namespace {

Tensor RandomTensor(size_t r, size_t c, std::mt19937_64& rng, double lo = -1.0,
                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::Matrix(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Runs a grad check of `f` over freshly randomized parameters.
double CheckPrimitive(std::vector<Parameter>& ps,
                      const std::function<Var(Tape&, std::vector<Var>&)>& f) {
  std::vector<Parameter*> ptrs;
  for (auto& p : ps) ptrs.push_back(&p);
  auto expr = [&](Tape& t) {
    std::vector<Var> vars;
    for (auto& p : ps) vars.push_back(t.Param(p));
    return f(t, vars);
  };
  return GradCheck(expr, ptrs, 1e-5).max_rel_error();
}

}  // namespace

TEST_CASE("squared norm value and gradient") {
  Parameter w("w", Tensor::Row({1.0, 2.0}));
  const double v = ForwardBackward([&](Tape& t) { return SquaredNorm(t.Param(w)); });
  CHECK(v == 5.0);
  CHECK(w.grad[0] == 2.0);
  CHECK(w.grad[1] == 4.0);
}

TEST_CASE("constant expression has zero gradient") {
  Parameter w("w", Tensor::Row({1.0, 2.0}));
  const double v = ForwardBackward([&](Tape& t) {
    t.Param(w);
    return t.Constant(Tensor::Scalar(3.0));
  });
  CHECK(v == 3.0);
  CHECK(w.grad[0] == 0.0);
  CHECK(w.grad[1] == 0.0);
}

TEST_CASE("log-sum-exp of zeros") {
  Parameter w("w", Tensor::Row({0.0, 0.0}));
  const double v = ForwardBackward([&](Tape& t) { return LogSumExp(t.Param(w)); });
  CHECK(v == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(w.grad[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w.grad[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gradients accumulate across repeated parameter use") {
  Parameter w("w", Tensor::Row({3.0}));
  ForwardBackward([&](Tape& t) {
    Var a = t.Param(w);
    return Sum(Mul(a, t.Param(w)));
  });
  CHECK(w.grad[0] == 6.0);
}

TEST_CASE("grad check on a quadratic is exact to rounding") {
  Parameter w("w", Tensor::Row({0.3, -1.2, 2.5}));
  Parameter* ps[] = {&w};
  auto rep = GradCheck(
      [&](Tape& t) {
        Var x = t.Param(w);
        return Add(SquaredNorm(x), Scale(Sum(x), 3.0));
      },
      ps, 1e-5);
  CHECK(rep.max_rel_error() < 1e-8);
  CHECK_FALSE(rep.at_kink());
  CHECK(rep.eps == 1e-5);
  CHECK(w.value[1] == -1.2);  // restored
}

TEST_CASE("grad check flags |z| evaluated at zero") {
  Parameter w("w", Tensor::Row({0.0, 1.0}));
  Parameter* ps[] = {&w};
  auto rep = GradCheck([&](Tape& t) { return Sum(Abs(t.Param(w))); }, ps, 1e-5);
  CHECK(rep.at_kink());
  // Subgradient convention at 0.
  ForwardBackward([&](Tape& t) { return Sum(Abs(t.Param(w))); });
  CHECK(w.grad[0] == 0.0);
  CHECK(w.grad[1] == 1.0);
}

TEST_CASE("every primitive passes grad check at random points") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Parameter> ps;
    ps.emplace_back("a", RandomTensor(3, 4, rng));
    ps.emplace_back("b", RandomTensor(3, 4, rng));
    ps.emplace_back("m", RandomTensor(4, 2, rng));
    ps.emplace_back("r", RandomTensor(1, 4, rng));
    ps.emplace_back("pos", RandomTensor(3, 4, rng, 0.5, 2.0));
    auto check = [&](const char* name, auto f) {
      CAPTURE(name);
      CHECK(CheckPrimitive(ps, f) < 1e-6);
    };
    check("add", [](Tape&, auto& v) { return Sum(Mul(Add(v[0], v[1]), v[0])); });
    check("sub", [](Tape&, auto& v) { return SquaredNorm(Sub(v[0], v[1])); });
    check("scale", [](Tape&, auto& v) { return Dot(Scale(v[0], -2.5), v[1]); });
    check("add_scalar", [](Tape&, auto& v) { return SquaredNorm(AddScalar(v[0], 0.3)); });
    check("add_bias", [](Tape&, auto& v) { return SquaredNorm(AddBias(v[0], v[3])); });
    check("add_n", [](Tape&, auto& v) {
      Var terms[] = {v[0], v[1], Mul(v[0], v[1])};
      return SquaredNorm(AddN(terms));
    });
    check("matmul", [](Tape&, auto& v) { return SquaredNorm(MatMul(v[0], v[2])); });
    check("transpose", [](Tape&, auto& v) {
      return SquaredNorm(MatMul(Transpose(v[2]), Transpose(v[0])));
    });
    check("exp", [](Tape&, auto& v) { return Sum(Exp(v[0])); });
    check("log", [](Tape&, auto& v) { return Dot(Log(v[4]), v[0]); });
    check("abs", [](Tape&, auto& v) { return Dot(Abs(v[0]), v[1]); });
    check("relu", [](Tape&, auto& v) { return Dot(Relu(v[0]), v[1]); });
    check("maximum", [](Tape&, auto& v) { return SquaredNorm(Maximum(v[0], v[1])); });
    check("mean", [](Tape&, auto& v) { return Mul(Mean(v[0]), Mean(v[1])); });
    check("norm", [](Tape&, auto& v) { return Norm(v[0]); });
    check("cosine", [](Tape&, auto& v) { return Cosine(v[0], v[1]); });
    check("softmax", [](Tape&, auto& v) { return Dot(Softmax(v[0]), v[1]); });
    check("log_softmax", [](Tape&, auto& v) { return Dot(LogSoftmax(v[0]), v[1]); });
    check("log_sum_exp", [](Tape&, auto& v) { return LogSumExp(Mul(v[0], v[1])); });
    check("pick", [](Tape&, auto& v) { return Pick(Exp(v[0]), 5); });
    check("row", [](Tape&, auto& v) { return SquaredNorm(Row(Mul(v[0], v[1]), 2)); });
    check("gather_rows", [](Tape&, auto& v) {
      const size_t idx[] = {2, 0, 2};
      return SquaredNorm(GatherRows(Mul(v[0], v[0]), idx));
    });
    check("concat", [](Tape&, auto& v) {
      Var parts[] = {v[0], Exp(v[1])};
      return SquaredNorm(Concat(parts));
    });
    check("stack_rows", [](Tape&, auto& v) {
      Var parts[] = {v[3], Exp(v[0])};
      return Dot(StackRows(parts), StackRows(parts));
    });
    check("squared_distances", [](Tape&, auto& v) {
      return Dot(SquaredDistances(v[0], v[3]), Row(Transpose(v[1]), 0));
    });
    check("layer_norm", [](Tape&, auto& v) {
      Var gain = AddScalar(v[3], 1.0);
      Var bias = Scale(v[3], 0.5);
      return Dot(LayerNorm(v[0], gain, bias), v[1]);
    });
    check("segment_attention", [](Tape&, auto& v) {
      // 3 rows split into segments {0,1} and {2}; 2 heads of width 2.
      const size_t offsets[] = {0, 2, 3};
      return Dot(SegmentAttention(v[0], v[1], Mul(v[0], v[1]), offsets, 2), v[4]);
    });
  }
}

TEST_CASE("dropout is identity at rate zero and scales kept units") {
  std::mt19937_64 rng(3);
  Tape t;
  Var x = t.Constant(Tensor::Matrix(4, 50, 1.0));
  CHECK(Dropout(x, 0.0, rng).index() == x.index());
  Var y = Dropout(x, 0.2, rng);
  size_t dropped = 0;
  for (double v : y.value().values()) {
    if (v == 0.0) {
      ++dropped;
    } else {
      CHECK(v == doctest::Approx(1.25));
    }
  }
  CHECK(dropped > 10);
  CHECK(dropped < 80);
}

TEST_CASE("shape mismatch names the primitive") {
  Tape t;
  Var a = t.Constant(Tensor::Matrix(2, 3));
  Var b = t.Constant(Tensor::Matrix(2, 2));
  try {
    Add(a, b);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
    CHECK(std::string(e.what()).find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(MatMul(a, a), NumericError);
}

TEST_CASE("non-finite intermediates are rejected") {
  Tape t;
  Var big = t.Constant(Tensor::Row({1000.0}));
  CHECK_THROWS_AS(Exp(big), NumericError);
  Var neg = t.Constant(Tensor::Row({-1.0}));
  CHECK_THROWS_AS(Log(neg), NumericError);
}

TEST_CASE("forward and backward are bit-deterministic") {
  std::mt19937_64 rng(11);
  Parameter a("a", RandomTensor(5, 8, rng));
  Parameter b("b", RandomTensor(8, 8, rng));
  auto run = [&]() {
    a.ZeroGrad();
    b.ZeroGrad();
    const double v = ForwardBackward([&](Tape& t) {
      Var h = MatMul(t.Param(a), t.Param(b));
      const size_t offsets[] = {0, 3, 5};
      return LogSumExp(SegmentAttention(h, h, h, offsets, 4));
    });
    return std::make_tuple(v, a.grad, b.grad);
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(std::get<0>(r1) == std::get<0>(r2));
  CHECK(std::get<1>(r1) == std::get<1>(r2));
  CHECK(std::get<2>(r1) == std::get<2>(r2));
}

TEST_CASE("tensor file format") {
  Tensor t({2, 3}, {1.5, -2.0, 0.0, 1e-300, 3.25, -0.0});
  std::stringstream ss;
  WriteTensor(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.rfind("MPET v1 dims=2,3\n", 0) == 0);
  CHECK(bytes.size() == std::string("MPET v1 dims=2,3\n").size() + 6 * 8);
  // 1.5 = 0x3FF8000000000000, little-endian.
  const size_t off = std::string("MPET v1 dims=2,3\n").size();
  CHECK(static_cast<unsigned char>(bytes[off + 7]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[off + 6]) == 0xF8);
  CHECK(static_cast<unsigned char>(bytes[off]) == 0x00);
  Tensor back = ReadTensor(ss);
  CHECK(back == t);

  std::stringstream bad("MPET v2 dims=1\n");
  CHECK_THROWS_AS(ReadTensor(bad), DataError);
  std::stringstream truncated("MPET v1 dims=2\nabc");
  CHECK_THROWS_AS(ReadTensor(truncated), DataError);
}
