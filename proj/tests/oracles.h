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

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. Deliberately naive: they enumerate instead of being
// clever, so they can check the real implementations.

#ifndef MPE_TESTS_ORACLES_H_
#define MPE_TESTS_ORACLES_H_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mpe/corpus.h"
#include "mpe/metrics.h"
#include "mpe/tensor.h"

namespace mpe::oracle {

inline Tensor RandomMatrix(size_t rows, size_t cols, std::mt19937_64& rng, double lo = -2.0,
                           double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t = Tensor::Matrix(rows, cols);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Calls f on every label sequence of length `positions` over `labels`.
inline void ForEachPath(size_t positions, size_t labels,
                        const std::function<void(const std::vector<size_t>&)>& f) {
  std::vector<size_t> y(positions, 0);
  while (true) {
    f(y);
    size_t i = 0;
    while (i < positions && ++y[i] == labels) y[i++] = 0;
    if (i == positions) return;
  }
}

inline double Score(const Tensor& e, const Tensor& t, const std::vector<size_t>& y) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); ++i) s += e.at(i, y[i]);
  for (size_t i = 0; i + 1 < y.size(); ++i) s += t.at(y[i], y[i + 1]);
  return s;
}

struct CrfEnumeration {
  double log_partition = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  double runner_up = -std::numeric_limits<double>::infinity();
  std::vector<size_t> best;  // tie rule: lowest label at the latest differing position
  double total_probability = 0.0;
};

inline CrfEnumeration EnumerateCrf(const Tensor& e, const Tensor& t) {
  CrfEnumeration r;
  std::vector<double> scores;
  ForEachPath(e.rows(), e.cols(), [&](const std::vector<size_t>& y) {
    const double s = Score(e, t, y);
    scores.push_back(s);
    const bool better =
        s > r.best_score ||
        (s == r.best_score && std::lexicographical_compare(y.rbegin(), y.rend(), r.best.rbegin(),
                                                           r.best.rend()));
    if (better) {
      if (s > r.best_score) r.runner_up = r.best_score;
      r.best_score = s;
      r.best = y;
    } else {
      r.runner_up = std::max(r.runner_up, s);
    }
  });
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - m);
  r.log_partition = m + std::log(sum);
  for (double s : scores) r.total_probability += std::exp(s - r.log_partition);
  return r;
}

// Micro-F1 counts by explicit set intersection of scored units.
inline LevelCounts SetIntersectionCounts(const std::vector<PredictedTriple>& preds,
                                         const std::vector<GoldTriple>& gold, Level level) {
  using Unit = std::tuple<size_t, int, size_t, size_t, size_t, size_t, std::string>;
  std::set<Unit> p, g;
  for (size_t q = 0; q < preds.size(); ++q) {
    const PredictedTriple& x = preds[q];
    const GoldTriple& y = gold[q];
    switch (level) {
      case Level::kEntity:
        if (x.head) p.insert({q, 0, x.head->first, x.head->last, 0, 0, ""});
        if (x.tail) p.insert({q, 1, x.tail->first, x.tail->last, 0, 0, ""});
        g.insert({q, 0, y.head.first, y.head.last, 0, 0, ""});
        g.insert({q, 1, y.tail.first, y.tail.last, 0, 0, ""});
        break;
      case Level::kRelation:
        if (x.relation) p.insert({q, 2, 0, 0, 0, 0, *x.relation});
        g.insert({q, 2, 0, 0, 0, 0, y.relation});
        break;
      case Level::kTriple:
        if (x.head && x.tail && x.relation) {
          p.insert({q, 3, x.head->first, x.head->last, x.tail->first, x.tail->last, *x.relation});
        }
        g.insert({q, 3, y.head.first, y.head.last, y.tail.first, y.tail.last, y.relation});
        break;
    }
  }
  std::vector<Unit> both;
  std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::back_inserter(both));
  LevelCounts c;
  c.tp = both.size();
  c.fp = p.size() - both.size();
  c.fn = g.size() - both.size();
  return c;
}

inline double F1FromCounts(const LevelCounts& c) {
  if (c.tp == 0) return 0.0;
  const double p = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double r = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return 2 * p * r / (p + r);
}

// Random small prediction/gold sets over tiny span and label alphabets so
// that matches and misses are both common.
inline void RandomTriples(std::mt19937_64& rng, size_t queries, std::vector<PredictedTriple>* preds,
                          std::vector<GoldTriple>* gold) {
  auto span = [&]() {
    const size_t a = std::uniform_int_distribution<size_t>(0, 2)(rng);
    return Span{a, a + std::uniform_int_distribution<size_t>(0, 1)(rng)};
  };
  auto label = [&]() { return std::string("R") + std::to_string(rng() % 3); };
  std::bernoulli_distribution missing(0.15);
  preds->clear();
  gold->clear();
  for (size_t q = 0; q < queries; ++q) {
    gold->push_back({span(), span(), label()});
    PredictedTriple p;
    if (!missing(rng)) p.head = span();
    if (!missing(rng)) p.tail = span();
    if (!missing(rng)) p.relation = label();
    preds->push_back(p);
  }
}

// Learnability check for the synthetic corpus: bag-of-trigger-word count
// vectors, class means from the first half of every relation, nearest mean
// (squared Euclidean) on the second half. Returns held-out accuracy.
inline double TriggerNearestMeanAccuracy(const Corpus& corpus, const std::string& trigger_prefix) {
  std::map<std::string, size_t> index;
  auto is_trigger = [&](const std::string& w) {
    return w.size() > trigger_prefix.size() && w.compare(0, trigger_prefix.size(), trigger_prefix) == 0 &&
           std::all_of(w.begin() + trigger_prefix.size(), w.end(), ::isdigit);
  };
  for (const auto& [rel, group] : corpus.groups()) {
    for (const auto& inst : group) {
      for (const auto& w : inst.tokens) {
        if (is_trigger(w)) index.emplace(w, 0);
      }
    }
  }
  size_t next = 0;
  for (auto& [w, i] : index) i = next++;
  auto features = [&](const SentenceInstance& inst) {
    std::vector<double> f(index.size(), 0.0);
    for (const auto& w : inst.tokens) {
      if (is_trigger(w)) f[index.at(w)] += 1.0;
    }
    return f;
  };
  std::vector<std::string> labels;
  std::vector<std::vector<double>> means;
  for (const auto& [rel, group] : corpus.groups()) {
    std::vector<double> m(index.size(), 0.0);
    const size_t half = group.size() / 2;
    for (size_t i = 0; i < half; ++i) {
      const auto f = features(group[i]);
      for (size_t d = 0; d < f.size(); ++d) m[d] += f[d] / static_cast<double>(half);
    }
    labels.push_back(rel);
    means.push_back(std::move(m));
  }
  size_t correct = 0, total = 0;
  for (const auto& [rel, group] : corpus.groups()) {
    for (size_t i = group.size() / 2; i < group.size(); ++i) {
      const auto f = features(group[i]);
      size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < means.size(); ++c) {
        double d = 0.0;
        for (size_t k = 0; k < f.size(); ++k) d += (f[k] - means[c][k]) * (f[k] - means[c][k]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      correct += labels[best] == rel;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace mpe::oracle

#endif  // MPE_TESTS_ORACLES_H_
