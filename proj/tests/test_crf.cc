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
#include <vector>

#include "mpe/crf.h"
#include "mpe/error.h"
#include "mpe/gradcheck.h"
#include "mpe/tags.h"
#include "oracles.h"

using namespace mpe;

namespace {

// Two positions, labels A=0 and B=1: A scores 1 at position 0, B scores 1
// at position 1, and A -> B carries 2.
Tensor ToyE() { return Tensor::FromRows({{1, 0}, {0, 1}}); }
Tensor ToyT() { return Tensor::FromRows({{0, 2}, {0, 0}}); }

}  // namespace

TEST_CASE("path score sums emissions and adjacent transitions") {
  const std::vector<size_t> ab = {0, 1}, ba = {1, 0};
  CHECK(PathScore(ToyE(), ToyT(), ab) == 4.0);
  CHECK(PathScore(ToyE(), ToyT(), ba) == 0.0);
  const Tensor z = Tensor::Matrix(3, 4), zt = Tensor::Matrix(4, 4);
  oracle::ForEachPath(3, 4, [&](const std::vector<size_t>& y) {
    CHECK(PathScore(z, zt, y) == 0.0);
  });
  const std::vector<size_t> short_path = {0};
  CHECK_THROWS_AS(PathScore(ToyE(), ToyT(), short_path), DataError);
}

TEST_CASE("toy log partition and nll agree with enumeration") {
  const oracle::CrfEnumeration en = oracle::EnumerateCrf(ToyE(), ToyT());
  const double by_hand = std::log(std::exp(1.0) + std::exp(4.0) + std::exp(0.0) + std::exp(1.0));
  CHECK(en.log_partition == doctest::Approx(by_hand).epsilon(1e-15));
  CHECK(std::abs(LogPartition(ToyE(), ToyT()) - by_hand) < 1e-12);
  const std::vector<size_t> gold = {0, 1};
  CHECK(std::abs(CrfNll(ToyE(), ToyT(), gold) - (by_hand - 4.0)) < 1e-12);
}

TEST_CASE("log partition symmetric cases") {
  CHECK(std::abs(LogPartition(Tensor::FromRows({{0, 0}}), Tensor::Matrix(2, 2)) - std::log(2.0)) <
        1e-15);
  const std::vector<size_t> gold = {1, 0};
  CHECK(std::abs(CrfNll(Tensor::Matrix(2, 2), Tensor::Matrix(2, 2), gold) - std::log(4.0)) <
        1e-15);
}

TEST_CASE("forward algorithm matches enumeration on random instances") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n = 1 + trial % 5;
    const Tensor e = oracle::RandomMatrix(n, 6, rng), t = oracle::RandomMatrix(6, 6, rng);
    const oracle::CrfEnumeration en = oracle::EnumerateCrf(e, t);
    CHECK(std::abs(LogPartition(e, t) - en.log_partition) < 1e-8);
    CHECK(std::abs(en.total_probability - 1.0) < 1e-8);
  }
}

TEST_CASE("nll is non-negative and zero for a forced path") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor e = oracle::RandomMatrix(4, 3, rng, -5, 5), t = oracle::RandomMatrix(3, 3, rng);
    oracle::ForEachPath(4, 3, [&](const std::vector<size_t>& y) { CHECK(CrfNll(e, t, y) >= 0.0); });
  }
  // Only 0 -> 1 -> 2 survives the masks.
  Tensor e = Tensor::Matrix(3, 3, kCrfMasked);
  e.at(0, 0) = e.at(1, 1) = e.at(2, 2) = 0.3;
  const std::vector<size_t> forced = {0, 1, 2};
  CHECK(CrfNll(e, Tensor::Matrix(3, 3), forced) == doctest::Approx(0.0));
  CHECK(Viterbi(e, Tensor::Matrix(3, 3)).labels == forced);
  const std::vector<size_t> bad = {0, 3, 2};
  CHECK_THROWS_AS(CrfNll(e, Tensor::Matrix(3, 3), bad), DataError);
}

TEST_CASE("viterbi on the toy and under ties") {
  const ViterbiResult v = Viterbi(ToyE(), ToyT());
  CHECK(v.labels == std::vector<size_t>{0, 1});
  CHECK(v.score == 4.0);
  // Every path ties; the latest position decides first, lowest label wins.
  const ViterbiResult tie = Viterbi(Tensor::Matrix(4, 3), Tensor::Matrix(3, 3));
  CHECK(tie.labels == std::vector<size_t>{0, 0, 0, 0});
  CHECK(tie.labels == oracle::EnumerateCrf(Tensor::Matrix(4, 3), Tensor::Matrix(3, 3)).best);
  // Ties only at the first position: the tail decides, then the rule.
  Tensor e = Tensor::Matrix(2, 2);
  e.at(1, 1) = 1.0;
  CHECK(Viterbi(e, Tensor::Matrix(2, 2)).labels == std::vector<size_t>{0, 1});
}

TEST_CASE("viterbi matches brute-force argmax") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const size_t n = 1 + trial % 6;
    const Tensor e = oracle::RandomMatrix(n, 4, rng), t = oracle::RandomMatrix(4, 4, rng);
    const oracle::CrfEnumeration en = oracle::EnumerateCrf(e, t);
    const ViterbiResult v = Viterbi(e, t);
    CHECK(std::abs(v.score - en.best_score) < 1e-10);
    CHECK(std::abs(PathScore(e, t, v.labels) - en.best_score) < 1e-10);
    if (en.best_score - en.runner_up > 1e-9) CHECK(v.labels == en.best);
  }
}

TEST_CASE("marginals match enumerated posteriors") {
  std::mt19937_64 rng(8);
  const Tensor e = oracle::RandomMatrix(4, 3, rng), t = oracle::RandomMatrix(3, 3, rng);
  const double z = oracle::EnumerateCrf(e, t).log_partition;
  Tensor node = Tensor::Matrix(4, 3), trans = Tensor::Matrix(3, 3);
  oracle::ForEachPath(4, 3, [&](const std::vector<size_t>& y) {
    const double p = std::exp(oracle::Score(e, t, y) - z);
    for (size_t i = 0; i < 4; ++i) node.at(i, y[i]) += p;
    for (size_t i = 0; i + 1 < 4; ++i) trans.at(y[i], y[i + 1]) += p;
  });
  const CrfMarginals m = Marginals(e, t);
  for (size_t i = 0; i < node.size(); ++i) CHECK(std::abs(m.node[i] - node[i]) < 1e-10);
  for (size_t i = 0; i < trans.size(); ++i) CHECK(std::abs(m.transitions[i] - trans[i]) < 1e-10);
}

TEST_CASE("crf nll gradients pass the finite-difference check") {
  std::mt19937_64 rng(21);
  Parameter e("e", oracle::RandomMatrix(5, 6, rng)), t("t", oracle::RandomMatrix(6, 6, rng));
  const std::vector<size_t> gold = {0, 3, 2, 5, 1};
  Parameter* ps[] = {&e, &t};
  const GradReport r = GradCheck(
      [&](Tape& tape) { return CrfNllLoss(tape.Param(e), tape.Param(t), gold); }, ps);
  CHECK(r.max_rel_error() < 1e-6);
}

TEST_CASE("masks and structural initialization") {
  const Tensor m = TransitionMask();
  const size_t start = TagIndex(Tag::kStart), end = TagIndex(Tag::kEnd);
  CHECK(m.at(TagIndex(Tag::kO), start) == kCrfMasked);
  CHECK(m.at(end, TagIndex(Tag::kO)) == kCrfMasked);
  CHECK(m.at(start, TagIndex(Tag::kBHead)) == 0.0);
  CHECK(m.at(TagIndex(Tag::kO), end) == 0.0);

  const Tensor b = BoundaryEmissionMask(3);
  CHECK(b.rows() == 5);
  CHECK(b.at(0, start) == 0.0);
  CHECK(b.at(0, TagIndex(Tag::kO)) == kCrfMasked);
  CHECK(b.at(4, end) == 0.0);
  CHECK(b.at(2, start) == kCrfMasked);
  CHECK(b.at(2, TagIndex(Tag::kX)) == 0.0);

  const Tensor init = InitialTransitions();
  CHECK(init.at(TagIndex(Tag::kO), TagIndex(Tag::kIHead)) == kCrfMasked);
  CHECK(init.at(TagIndex(Tag::kBHead), TagIndex(Tag::kIHead)) == 0.0);
  CHECK(init.at(TagIndex(Tag::kX), TagIndex(Tag::kITail)) == 0.0);
  CHECK(init.at(TagIndex(Tag::kBHead), TagIndex(Tag::kITail)) == kCrfMasked);
  CHECK(init.at(start, TagIndex(Tag::kX)) == kCrfMasked);
}

TEST_CASE("decoding under the initial transitions respects label structure") {
  std::mt19937_64 rng(4);
  Tensor t = InitialTransitions();
  const Tensor mask = TransitionMask();
  for (size_t i = 0; i < t.size(); ++i) t[i] += mask[i];
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n = 1 + trial % 7;
    Tensor e = oracle::RandomMatrix(n + 2, kNumTags, rng, -3, 3);
    const Tensor bm = BoundaryEmissionMask(n);
    for (size_t i = 0; i < e.size(); ++i) e[i] += bm[i];
    const std::vector<size_t> y = Viterbi(e, t).labels;
    CHECK(y.front() == TagIndex(Tag::kStart));
    CHECK(y.back() == TagIndex(Tag::kEnd));
    for (size_t i = 0; i + 1 < y.size(); ++i) CHECK(t.at(y[i], y[i + 1]) > kCrfMasked / 2);
  }
}

TEST_CASE("structured viterbi matches the best well-formed sequence") {
  std::mt19937_64 rng(11);
  const std::vector<std::vector<std::vector<size_t>>> layouts = {
      {{0}, {1}},
      {{0, 1}, {2}},
      {{0}, {1}, {2}},
      {{0}, {1, 2}, {3}},
      {{0, 1}, {2}, {3, 4}},
      {{0}, {1}, {2}, {3}, {4}},
  };
  for (int trial = 0; trial < 60; ++trial) {
    const SubtokenMap sub(layouts[trial % layouts.size()]);
    const size_t n = sub.num_subtokens();
    const Tensor e = oracle::RandomMatrix(n + 2, kNumTags, rng);
    const Tensor t = oracle::RandomMatrix(kNumTags, kNumTags, rng);
    double best = -1e300, runner_up = -1e300;
    std::vector<size_t> best_path;
    oracle::ForEachPath(n, kNumInnerTags, [&](const std::vector<size_t>& inner) {
      std::vector<size_t> path = {TagIndex(Tag::kStart)};
      path.insert(path.end(), inner.begin(), inner.end());
      path.push_back(TagIndex(Tag::kEnd));
      TagSequence tags;
      for (size_t y : path) tags.push_back(TagFromIndex(y));
      for (size_t i = 0; i < n; ++i) {
        if (!sub.IsWordStart(i) && tags[i + 1] != Tag::kX) return;
      }
      if (!CheckTagSequence(tags, sub).empty()) return;
      const double s = PathScore(e, t, path);
      if (s > best) {
        runner_up = best;
        best = s;
        best_path = path;
      } else if (s > runner_up) {
        runner_up = s;
      }
    });
    const ViterbiResult v = StructuredViterbi(e, t, sub);
    CHECK(std::abs(v.score - best) < 1e-10);
    CHECK(std::abs(PathScore(e, t, v.labels) - best) < 1e-10);
    if (best - runner_up > 1e-9) CHECK(v.labels == best_path);
  }
}

TEST_CASE("structured viterbi falls back on one-word sentences") {
  std::mt19937_64 rng(5);
  const SubtokenMap sub({{0, 1}});
  const Tensor e = oracle::RandomMatrix(4, kNumTags, rng);
  const Tensor t = oracle::RandomMatrix(kNumTags, kNumTags, rng);
  CHECK(StructuredViterbi(e, t, sub).labels == Viterbi(e, t).labels);
  CHECK_THROWS_AS(StructuredViterbi(oracle::RandomMatrix(3, kNumTags, rng), t, sub), DataError);
}
