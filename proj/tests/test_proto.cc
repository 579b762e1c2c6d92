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
#include <limits>
#include <random>
#include <vector>

#include "mpe/error.h"
#include "mpe/gradcheck.h"
#include "mpe/proto.h"

using namespace mpe;

namespace {

Var R(Tape& t, std::initializer_list<double> v) { return t.Constant(Tensor::Row(v)); }

SpanRep Rep(Tape& t, std::initializer_list<double> h, std::initializer_list<double> tl,
            std::initializer_list<double> s) {
  return {R(t, h), R(t, tl), R(t, s)};
}

void CheckRow(const Var& v, std::initializer_list<double> expected, double tol = 1e-12) {
  REQUIRE(v.rows() == 1);
  REQUIRE(v.cols() == expected.size());
  size_t i = 0;
  for (double e : expected) CHECK(v.value()[i++] == doctest::Approx(e).epsilon(tol));
}

std::vector<double> Values(const Var& v) {
  return {v.value().values().begin(), v.value().values().end()};
}

Tensor Identity(size_t d) {
  Tensor t = Tensor::Matrix(d, d);
  for (size_t i = 0; i < d; ++i) t.at(i, i) = 1.0;
  return t;
}

const double kE = std::exp(1.0);

}  // namespace

TEST_CASE("mean prototypes") {
  Tape t;
  const std::vector<SpanRep> one = {Rep(t, {1, 2}, {3, 4}, {5, 6})};
  CheckRow(MeanPrototypes(one).head, {1, 2});
  CheckRow(MeanPrototypes(one).sentence, {5, 6});
  const std::vector<SpanRep> two = {Rep(t, {1, 0}, {0, 0}, {2, 2}), Rep(t, {0, 1}, {0, 0}, {2, 2})};
  CheckRow(MeanPrototypes(two).head, {0.5, 0.5});
  CheckRow(MeanPrototypes(two).sentence, {2, 2});
  CHECK_THROWS_AS(MeanPrototypes(std::vector<SpanRep>{}), DataError);
}

TEST_CASE("attentive prototypes") {
  Tape t;
  const std::vector<SpanRep> two = {Rep(t, {1, 0}, {1, 0}, {1, 0}), Rep(t, {0, 1}, {0, 1}, {0, 1})};
  const ClassPrototypes p = AttentivePrototypes(two, R(t, {1, 0}));
  CheckRow(p.head, {kE / (kE + 1), 1 / (kE + 1)});
  CHECK(p.head.value()[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CheckRow(p.tail, {kE / (kE + 1), 1 / (kE + 1)});

  const std::vector<SpanRep> one = {Rep(t, {3, -1}, {2, 2}, {0, 1})};
  CheckRow(AttentivePrototypes(one, R(t, {5, 5})).head, {3, -1});
  CHECK_THROWS(AttentivePrototypes(one, R(t, {1, 2, 3})));
}

TEST_CASE("attention with equal energies is the mean") {
  Tape t;
  // The query is orthogonal to every support vector.
  const std::vector<SpanRep> s = {Rep(t, {1, 0, 0}, {2, 0, 0}, {0, 3, 0}),
                                  Rep(t, {-4, 0, 0}, {5, 0, 0}, {0, -1, 0}),
                                  Rep(t, {0.5, 0, 0}, {-2, 0, 0}, {0, 7, 0})};
  const ClassPrototypes a = AttentivePrototypes(s, R(t, {0, 0, 1}));
  const ClassPrototypes m = MeanPrototypes(s);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(a.head.value()[i] - m.head.value()[i]) <= 1e-12);
    CHECK(std::abs(a.tail.value()[i] - m.tail.value()[i]) <= 1e-12);
    CHECK(std::abs(a.sentence.value()[i] - m.sentence.value()[i]) <= 1e-12);
  }
}

TEST_CASE("support order does not matter") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Tape t;
  std::vector<SpanRep> s;
  for (int k = 0; k < 5; ++k) {
    auto row = [&] { return t.Constant(Tensor::Row({g(rng), g(rng), g(rng), g(rng)})); };
    s.push_back({row(), row(), row()});
  }
  const Var q = t.Constant(Tensor::Row({g(rng), g(rng), g(rng), g(rng)}));
  const std::vector<double> mean = Values(MeanPrototypes(s).head);
  const std::vector<double> att = Values(AttentivePrototypes(s, q).tail);
  std::vector<size_t> perm = {0, 1, 2, 3, 4};
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SpanRep> p;
    for (size_t i : perm) p.push_back(s[i]);
    const std::vector<double> pm = Values(MeanPrototypes(p).head);
    const std::vector<double> pa = Values(AttentivePrototypes(p, q).tail);
    for (size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(pm[i] - mean[i]) <= 1e-12);
      CHECK(std::abs(pa[i] - att[i]) <= 1e-12);
    }
  }
}

TEST_CASE("knowledge graph prototype") {
  Tape t;
  const Var w = t.Constant(Identity(2));
  CheckRow(KgPrototype(R(t, {1, 2}), R(t, {1, 0}), w), {0, 2});
  CheckRow(KgPrototype(R(t, {3, -2}), R(t, {3, -2}), t.Constant(Tensor::Matrix(2, 2, 0.7))), {0, 0});
  CheckRow(KgPrototype(R(t, {1, 5}), R(t, {-1, 2}), t.Constant(Tensor::Matrix(2, 2))), {0, 0});
  const Var w2 = t.Constant(Tensor::FromRows({{1, 2}, {3, 4}}));
  CHECK(Values(KgPrototype(R(t, {1, 5}), R(t, {-1, 2}), w2)) ==
        Values(KgPrototype(R(t, {-1, 2}), R(t, {1, 5}), w2)));
  CHECK_THROWS(KgPrototype(R(t, {1, 2}), R(t, {1, 2, 3}), w));
  CHECK_THROWS(KgPrototype(R(t, {1, 2, 3}), R(t, {1, 2, 3}), w));
}

TEST_CASE("relation vector layout") {
  Tape t;
  const Var w = t.Constant(Identity(2));
  CheckRow(RelationVector(R(t, {7, 8}), R(t, {1, 2}), R(t, {1, 0}), w, RelationFeatures::kMulti),
           {7, 8, 0, 2});
  CheckRow(RelationVector(R(t, {7, 8}), R(t, {1, 2}), R(t, {1, 0}), w, RelationFeatures::kSentence),
           {7, 8});
  CheckRow(RelationVector(R(t, {7, 8}), R(t, {1, 2}), R(t, {1, 0}), w, RelationFeatures::kKg), {0, 2});
}

TEST_CASE("distance cross-entropy") {
  Tape t;
  const double gap4 = -std::log(1.0 / (1.0 + std::exp(-4.0)));
  CHECK(gap4 == doctest::Approx(0.0181).epsilon(1e-3));
  // Query at its prototype, the other at squared distance 4.
  const Var protos = t.Constant(Tensor::FromRows({{0, 0}, {2, 0}}));
  CHECK(DistanceCrossEntropy(protos, R(t, {0, 0}), 0).scalar() == doctest::Approx(gap4).epsilon(1e-12));
  // Equidistant prototypes give log N.
  const Var ring = t.Constant(Tensor::FromRows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}));
  CHECK(DistanceCrossEntropy(ring, R(t, {0, 0}), 2).scalar() == doctest::Approx(std::log(4.0)));
  // A common shift of all distances changes nothing.
  const Var a = t.Constant(Tensor::FromRows({{0, 0}, {1, 1}, {3, 0}}));
  const Var shifted = t.Constant(Tensor::FromRows({{0, 0, 5}, {1, 1, 5}, {3, 0, 5}}));
  CHECK(DistanceCrossEntropy(a, R(t, {0.5, 0.2}), 1).scalar() ==
        doctest::Approx(DistanceCrossEntropy(shifted, R(t, {0.5, 0.2, 0}), 1).scalar()));
  CHECK_THROWS(DistanceCrossEntropy(protos, R(t, {0, 0}), 2));
  CHECK_THROWS(DistanceCrossEntropy(protos, R(t, {0, 0, 0}), 0));
}

TEST_CASE("entity and relation losses") {
  Tape t;
  auto set = [&](Var head, Var tail, Var rel) {
    PrototypeSet p;
    p.head = head;
    p.tail = tail;
    p.relation = rel;
    return p;
  };
  const Var two = t.Constant(Tensor::FromRows({{0, 0}, {2, 0}}));
  const std::vector<PrototypeSet> protos = {set(two, two, two)};
  const std::vector<SpanRep> q = {Rep(t, {0, 0}, {0, 0}, {0, 0})};
  const std::vector<size_t> gold = {0};
  const double gap4 = std::log(1.0 + std::exp(-4.0));
  CHECK(EntityLoss(q, gold, protos).scalar() == doctest::Approx(gap4).epsilon(1e-12));
  const std::vector<Var> qv = {R(t, {0, 0})};
  CHECK(RelationLoss(qv, gold, protos).scalar() == doctest::Approx(gap4).epsilon(1e-12));
  // Head at gold, tail equidistant: mean of the two roles.
  const std::vector<SpanRep> mixed = {Rep(t, {0, 0}, {1, 0}, {0, 0})};
  CHECK(EntityLoss(mixed, gold, protos).scalar() == doctest::Approx((gap4 + std::log(2.0)) / 2));
  const std::vector<size_t> bad = {2};
  CHECK_THROWS(RelationLoss(qv, bad, protos));
}

TEST_CASE("intra-class loss") {
  Tape t;
  CHECK(IntraLoss({{R(t, {1, 0})}}, t.Constant(Tensor::FromRows({{0, 0}}))).scalar() == 1.0);
  const Var p = t.Constant(Tensor::FromRows({{1, 1}, {0, 2}}));
  CHECK(IntraLoss({{R(t, {1, 1}), R(t, {1, 1})}, {R(t, {0, 2}), R(t, {0, 2})}}, p).scalar() == 0.0);
  const double base =
      IntraLoss({{R(t, {1, 2}), R(t, {0, 1})}, {R(t, {-1, 3}), R(t, {2, 2})}}, p).scalar();
  const Var p2 = t.Constant(Tensor::FromRows({{2, 2}, {0, 4}}));
  const double doubled =
      IntraLoss({{R(t, {2, 4}), R(t, {0, 2})}, {R(t, {-2, 6}), R(t, {4, 4})}}, p2).scalar();
  CHECK(doubled == doctest::Approx(4.0 * base).epsilon(1e-12));
  // (1 + 1 + 1 + 5) / 4 for offsets (0,1),(-1,0),(-1,1),(2,0).
  CHECK(base == doctest::Approx(2.0));
}

TEST_CASE("inter-class loss in both modes") {
  Tape t;
  const Var same = t.Constant(Tensor::FromRows({{1, 0}, {1, 0}}));
  const Var orth = t.Constant(Tensor::FromRows({{1, 0}, {0, 1}}));
  const Var opp = t.Constant(Tensor::FromRows({{1, 0}, {-1, 0}}));
  CHECK(InterLoss(same, InterMode::kPaper).scalar() == doctest::Approx(0.5));
  CHECK(InterLoss(orth, InterMode::kPaper).scalar() == doctest::Approx(1.0));
  CHECK(InterLoss(opp, InterMode::kPaper).scalar() == doctest::Approx(1.5));
  CHECK(InterLoss(same, InterMode::kRepel).scalar() == doctest::Approx(1.0));
  CHECK(InterLoss(orth, InterMode::kRepel).scalar() == doctest::Approx(0.5));
  CHECK(InterLoss(opp, InterMode::kRepel).scalar() == doctest::Approx(0.0));
  const Var zero = t.Constant(Tensor::FromRows({{0, 0}, {1, 0}}));
  CHECK(InterLoss(zero, InterMode::kRepel).scalar() == doctest::Approx(0.5));
  CHECK(InterLoss(zero, InterMode::kPaper).scalar() == doctest::Approx(1.0));
  CHECK_THROWS_AS(InterLoss(t.Constant(Tensor::FromRows({{1, 0}})), InterMode::kRepel), UsageError);
  CHECK(ParseInterMode(InterModeName(InterMode::kPaper)) == InterMode::kPaper);
}

TEST_CASE("loss assembly") {
  LossWeights w;
  const LossBundle ones{1, 1, 1, 1, 1, 0};
  CHECK(AssembleLosses(ones, w).total == doctest::Approx(4.05).epsilon(1e-12));
  LossWeights crf_only = w;
  crf_only.beta = crf_only.gamma = crf_only.delta = 0.0;
  CHECK(AssembleLosses({2.5, 3, 4, 5, 6, 0}, crf_only).total == 2.5);
  CHECK(AssembleLosses({}, w).total == 0.0);
  LossWeights no_reg = w;
  no_reg.use_intra = no_reg.use_inter = false;
  CHECK(AssembleLosses(ones, no_reg).total == doctest::Approx(2.3));
  LossBundle bad = ones;
  bad.entity = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(AssembleLosses(bad, w), NumericError);
  Tape t;
  const Var one = R(t, {1});
  CHECK(AssembleTotal(one, one, one, one, one, w).scalar() == doctest::Approx(4.05).epsilon(1e-12));
}

TEST_CASE("prototype losses pass grad check") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  auto random = [&](size_t r, size_t c) {
    Tensor x = Tensor::Matrix(r, c);
    for (double& v : x.values()) v = g(rng);
    return x;
  };
  const size_t n = 3, k = 2, d = 3;
  Parameter reps("reps", random(n * k * 3 + 3, d), ParamGroup::kEncoder);
  Parameter w_r("w_r", random(d, d));
  const std::vector<Parameter*> params = {&reps, &w_r};
  for (bool attention : {false, true}) {
    for (InterMode mode : {InterMode::kRepel, InterMode::kPaper}) {
      auto expr = [&](Tape& t) {
        const Var all = t.Param(reps);
        const Var w = t.Param(w_r);
        std::vector<std::vector<SpanRep>> support(n);
        size_t row = 0;
        for (size_t c = 0; c < n; ++c) {
          for (size_t s = 0; s < k; ++s, row += 3) support[c].push_back(SpanRepAt(all, row, row + 1, row + 2));
        }
        const SpanRep q = SpanRepAt(all, row, row + 1, row + 2);
        const PrototypeSet mean = BuildPrototypes(support, w, RelationFeatures::kMulti, nullptr);
        const PrototypeSet seen =
            attention ? BuildPrototypes(support, w, RelationFeatures::kMulti, &q.sentence) : mean;
        const std::vector<SpanRep> qs = {q};
        const std::vector<size_t> gold = {1};
        const std::vector<PrototypeSet> sets = {seen};
        const std::vector<Var> qv = {RelationVector(q.sentence, q.head, q.tail, w, RelationFeatures::kMulti)};
        std::vector<std::vector<Var>> inst(n);
        for (size_t c = 0; c < n; ++c) {
          for (const SpanRep& s : support[c]) {
            inst[c].push_back(RelationVector(s.sentence, s.head, s.tail, w, RelationFeatures::kMulti));
          }
        }
        return AssembleTotal(t.Constant(Tensor::Scalar(0.0)), EntityLoss(qs, gold, sets),
                             RelationLoss(qv, gold, sets), IntraLoss(inst, mean.relation),
                             InterLoss(mean.relation, mode), LossWeights{});
      };
      const GradReport r = GradCheck(expr, params, 1e-5);
      CHECK_FALSE(r.at_kink());
      CHECK(r.max_rel_error() < 1e-6);
    }
  }
}

TEST_CASE("attentive builds are counted") {
  Tape t;
  ProtoStats stats;
  const std::vector<std::vector<SpanRep>> support = {{Rep(t, {1, 0}, {0, 1}, {1, 1})},
                                                     {Rep(t, {0, 1}, {1, 0}, {1, -1})}};
  const Var w = t.Constant(Identity(2));
  const Var q = R(t, {1, 0});
  BuildPrototypes(support, w, RelationFeatures::kMulti, nullptr, &stats);
  CHECK(stats.attentive_calls == 0);
  const PrototypeSet p = BuildPrototypes(support, w, RelationFeatures::kMulti, &q, &stats);
  CHECK(stats.attentive_calls > 0);
  CHECK(p.relation.rows() == 2);
  CHECK(p.relation.cols() == 4);
}
