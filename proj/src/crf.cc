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

#include "mpe/crf.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "mpe/error.h"
#include "mpe/tags.h"

namespace mpe {
namespace {

void CheckShapes(const Tensor& e, const Tensor& t) {
  if (e.rank() != 2 || t.rank() != 2 || t.rows() != t.cols() || e.cols() != t.rows()) {
    throw NumericError("crf: emissions " + e.ShapeString() + " incompatible with transitions " +
                       t.ShapeString());
  }
  if (e.rows() == 0) throw NumericError("crf: empty sequence");
}

void CheckLabels(const Tensor& e, std::span<const size_t> labels) {
  if (labels.size() != e.rows()) {
    throw DataError("crf: label sequence of length " + std::to_string(labels.size()) +
                    " for " + std::to_string(e.rows()) + " positions");
  }
  for (size_t y : labels) {
    if (y >= e.cols()) throw DataError("crf: label " + std::to_string(y) + " out of range");
  }
}

double LogSumExp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// alpha[i][y]: log-sum of prefix scores ending in y at position i.
Tensor Forward(const Tensor& e, const Tensor& t) {
  const size_t p = e.rows(), l = e.cols();
  Tensor alpha = Tensor::Matrix(p, l);
  for (size_t y = 0; y < l; ++y) alpha.at(0, y) = e.at(0, y);
  std::vector<double> buf(l);
  for (size_t i = 1; i < p; ++i) {
    for (size_t y = 0; y < l; ++y) {
      for (size_t prev = 0; prev < l; ++prev) buf[prev] = alpha.at(i - 1, prev) + t.at(prev, y);
      alpha.at(i, y) = e.at(i, y) + LogSumExp(buf);
    }
  }
  return alpha;
}

// beta[i][y]: log-sum of suffix scores after position i given y at i.
Tensor Backward(const Tensor& e, const Tensor& t) {
  const size_t p = e.rows(), l = e.cols();
  Tensor beta = Tensor::Matrix(p, l);
  std::vector<double> buf(l);
  for (size_t i = p - 1; i-- > 0;) {
    for (size_t y = 0; y < l; ++y) {
      for (size_t next = 0; next < l; ++next) {
        buf[next] = t.at(y, next) + e.at(i + 1, next) + beta.at(i + 1, next);
      }
      beta.at(i, y) = LogSumExp(buf);
    }
  }
  return beta;
}

}  // namespace

double PathScore(const Tensor& emissions, const Tensor& transitions,
                 std::span<const size_t> labels) {
  CheckShapes(emissions, transitions);
  CheckLabels(emissions, labels);
  double s = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) s += emissions.at(i, labels[i]);
  for (size_t i = 0; i + 1 < labels.size(); ++i) s += transitions.at(labels[i], labels[i + 1]);
  return s;
}

double LogPartition(const Tensor& emissions, const Tensor& transitions) {
  CheckShapes(emissions, transitions);
  Tensor alpha = Forward(emissions, transitions);
  return LogSumExp(alpha.row(alpha.rows() - 1));
}

double CrfNll(const Tensor& emissions, const Tensor& transitions,
              std::span<const size_t> gold) {
  const double score = PathScore(emissions, transitions, gold);
  // Clamp rounding noise: the partition dominates every single path.
  return std::max(0.0, LogPartition(emissions, transitions) - score);
}

ViterbiResult Viterbi(const Tensor& emissions, const Tensor& transitions) {
  CheckShapes(emissions, transitions);
  const size_t p = emissions.rows(), l = emissions.cols();
  Tensor best = Tensor::Matrix(p, l);
  std::vector<size_t> back(p * l, 0);
  for (size_t y = 0; y < l; ++y) best.at(0, y) = emissions.at(0, y);
  for (size_t i = 1; i < p; ++i) {
    for (size_t y = 0; y < l; ++y) {
      size_t arg = 0;
      double top = -std::numeric_limits<double>::infinity();
      for (size_t prev = 0; prev < l; ++prev) {
        const double s = best.at(i - 1, prev) + transitions.at(prev, y);
        if (s > top) {
          top = s;
          arg = prev;
        }
      }
      best.at(i, y) = top + emissions.at(i, y);
      back[i * l + y] = arg;
    }
  }
  ViterbiResult out;
  out.labels.assign(p, 0);
  size_t y = 0;
  double top = -std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < l; ++c) {
    if (best.at(p - 1, c) > top) {
      top = best.at(p - 1, c);
      y = c;
    }
  }
  out.score = top;
  for (size_t i = p; i-- > 0;) {
    out.labels[i] = y;
    if (i > 0) y = back[i * l + y];
  }
  return out;
}

namespace {

// Decoder state: inner label, run (0 none, 1 head, 2 tail) and begun roles.
struct DecodeState {
  size_t label;
  int run;
  bool head;
  bool tail;
};

size_t StateIndex(const DecodeState& s) {
  return ((s.label * 3 + static_cast<size_t>(s.run)) * 2 + s.head) * 2 + s.tail;
}

constexpr size_t kDecodeStates = kNumInnerTags * 3 * 2 * 2;

// Successor of `from` on `label`, or nullopt when the step is ill-formed.
std::optional<DecodeState> Step(const DecodeState& from, Tag label, bool word_start) {
  if (!word_start) {
    if (label != Tag::kX) return std::nullopt;
    return DecodeState{TagIndex(label), from.run, from.head, from.tail};
  }
  DecodeState to{TagIndex(label), 0, from.head, from.tail};
  switch (label) {
    case Tag::kO:
      return to;
    case Tag::kBHead:
      if (from.head) return std::nullopt;
      to.head = true;
      to.run = 1;
      return to;
    case Tag::kBTail:
      if (from.tail) return std::nullopt;
      to.tail = true;
      to.run = 2;
      return to;
    case Tag::kIHead:
      if (from.run != 1) return std::nullopt;
      to.run = 1;
      return to;
    case Tag::kITail:
      if (from.run != 2) return std::nullopt;
      to.run = 2;
      return to;
    default:
      return std::nullopt;
  }
}

}  // namespace

ViterbiResult StructuredViterbi(const Tensor& emissions, const Tensor& transitions,
                                const SubtokenMap& sub) {
  CheckShapes(emissions, transitions);
  const size_t n = sub.num_subtokens();
  if (emissions.rows() != n + 2 || emissions.cols() != kNumTags) {
    throw DataError("structured decoding needs " + std::to_string(n + 2) + " x " +
                    std::to_string(kNumTags) + " emissions, got " + emissions.ShapeString());
  }
  if (sub.num_words() < 2) return Viterbi(emissions, transitions);
  const double kNone = -std::numeric_limits<double>::infinity();
  const size_t start = TagIndex(Tag::kStart), end = TagIndex(Tag::kEnd);
  // best[i][s]: top score of a prefix ending at subtoken i in state s.
  std::vector<std::vector<double>> best(n, std::vector<double>(kDecodeStates, kNone));
  std::vector<std::vector<size_t>> back(n, std::vector<size_t>(kDecodeStates, 0));
  std::vector<DecodeState> states(kDecodeStates);
  for (size_t y = 0; y < kNumInnerTags; ++y) {
    for (int run = 0; run < 3; ++run) {
      for (int h = 0; h < 2; ++h) {
        for (int t = 0; t < 2; ++t) {
          const DecodeState s{y, run, h == 1, t == 1};
          states[StateIndex(s)] = s;
        }
      }
    }
  }
  const DecodeState origin{start, 0, false, false};
  for (size_t y = 0; y < kNumInnerTags; ++y) {
    const auto to = Step(origin, TagFromIndex(y), sub.IsWordStart(0));
    if (!to) continue;
    best[0][StateIndex(*to)] =
        emissions.at(0, start) + transitions.at(start, y) + emissions.at(1, y);
  }
  for (size_t i = 1; i < n; ++i) {
    const bool word_start = sub.IsWordStart(i);
    // Visiting predecessors in index order keeps ties on the lowest one.
    for (size_t prev = 0; prev < kDecodeStates; ++prev) {
      const double base = best[i - 1][prev];
      if (base == kNone) continue;
      for (size_t y = 0; y < kNumInnerTags; ++y) {
        const auto to = Step(states[prev], TagFromIndex(y), word_start);
        if (!to) continue;
        const size_t k = StateIndex(*to);
        const double v = base + transitions.at(states[prev].label, y) + emissions.at(i + 1, y);
        if (v > best[i][k]) {
          best[i][k] = v;
          back[i][k] = prev;
        }
      }
    }
  }
  size_t arg = 0;
  double top = kNone;
  for (size_t k = 0; k < kDecodeStates; ++k) {
    if (best[n - 1][k] == kNone || !states[k].head || !states[k].tail) continue;
    const double v = best[n - 1][k] + transitions.at(states[k].label, end) + emissions.at(n + 1, end);
    if (v > top) {
      top = v;
      arg = k;
    }
  }
  if (top == kNone) return Viterbi(emissions, transitions);
  ViterbiResult out;
  out.score = top;
  out.labels.assign(n + 2, 0);
  out.labels[0] = start;
  out.labels[n + 1] = end;
  for (size_t i = n; i-- > 0;) {
    out.labels[i + 1] = states[arg].label;
    if (i > 0) arg = back[i][arg];
  }
  return out;
}

CrfMarginals Marginals(const Tensor& emissions, const Tensor& transitions) {
  CheckShapes(emissions, transitions);
  const size_t p = emissions.rows(), l = emissions.cols();
  const Tensor alpha = Forward(emissions, transitions);
  const Tensor beta = Backward(emissions, transitions);
  const double log_z = LogSumExp(alpha.row(p - 1));
  CrfMarginals m{Tensor::Matrix(p, l), Tensor::Matrix(l, l)};
  for (size_t i = 0; i < p; ++i) {
    for (size_t y = 0; y < l; ++y) {
      m.node.at(i, y) = std::exp(alpha.at(i, y) + beta.at(i, y) - log_z);
    }
  }
  for (size_t i = 0; i + 1 < p; ++i) {
    for (size_t a = 0; a < l; ++a) {
      for (size_t b = 0; b < l; ++b) {
        m.transitions.at(a, b) += std::exp(alpha.at(i, a) + transitions.at(a, b) +
                                           emissions.at(i + 1, b) + beta.at(i + 1, b) - log_z);
      }
    }
  }
  return m;
}

Var CrfPathScore(Var emissions, Var transitions, std::span<const size_t> labels) {
  Tape& tape = *emissions.tape();
  const double s = PathScore(emissions.value(), transitions.value(), labels);
  std::vector<size_t> y(labels.begin(), labels.end());
  const size_t ei = emissions.index(), ti = transitions.index();
  return tape.Record("crf_path_score", Tensor::Scalar(s), {emissions, transitions},
                     [ei, ti, y = std::move(y)](Tape& tp, size_t self) {
    const double g = tp.OutputGrad(self)[0];
    if (Tensor* ge = tp.GradBuffer(ei)) {
      for (size_t i = 0; i < y.size(); ++i) ge->at(i, y[i]) += g;
    }
    if (Tensor* gt = tp.GradBuffer(ti)) {
      for (size_t i = 0; i + 1 < y.size(); ++i) gt->at(y[i], y[i + 1]) += g;
    }
  });
}

Var CrfLogPartition(Var emissions, Var transitions) {
  Tape& tape = *emissions.tape();
  const double z = LogPartition(emissions.value(), transitions.value());
  const size_t ei = emissions.index(), ti = transitions.index();
  return tape.Record("crf_log_partition", Tensor::Scalar(z), {emissions, transitions},
                     [ei, ti](Tape& tp, size_t self) {
    const double g = tp.OutputGrad(self)[0];
    const CrfMarginals m = Marginals(tp.value(ei), tp.value(ti));
    if (Tensor* ge = tp.GradBuffer(ei)) {
      for (size_t i = 0; i < ge->size(); ++i) (*ge)[i] += g * m.node[i];
    }
    if (Tensor* gt = tp.GradBuffer(ti)) {
      for (size_t i = 0; i < gt->size(); ++i) (*gt)[i] += g * m.transitions[i];
    }
  });
}

Var CrfNllLoss(Var emissions, Var transitions, std::span<const size_t> gold) {
  CheckLabels(emissions.value(), gold);
  return Sub(CrfLogPartition(emissions, transitions), CrfPathScore(emissions, transitions, gold));
}

Tensor TransitionMask() {
  Tensor m = Tensor::Matrix(kNumTags, kNumTags);
  const size_t start = TagIndex(Tag::kStart), end = TagIndex(Tag::kEnd);
  for (size_t y = 0; y < kNumTags; ++y) {
    m.at(y, start) = kCrfMasked;
    m.at(end, y) = kCrfMasked;
  }
  return m;
}

Tensor BoundaryEmissionMask(size_t subtokens) {
  Tensor m = Tensor::Matrix(subtokens + 2, kNumTags);
  const size_t start = TagIndex(Tag::kStart), end = TagIndex(Tag::kEnd);
  for (size_t y = 0; y < kNumTags; ++y) {
    if (y != start) m.at(0, y) = kCrfMasked;
    if (y != end) m.at(subtokens + 1, y) = kCrfMasked;
  }
  for (size_t i = 1; i <= subtokens; ++i) {
    m.at(i, start) = kCrfMasked;
    m.at(i, end) = kCrfMasked;
  }
  return m;
}

Tensor InitialTransitions() {
  Tensor t = Tensor::Matrix(kNumTags, kNumTags);
  auto idx = [](Tag x) { return TagIndex(x); };
  for (size_t from = 0; from < kNumTags; ++from) {
    const Tag f = static_cast<Tag>(from);
    if (f != Tag::kBHead && f != Tag::kIHead && f != Tag::kX) {
      t.at(from, idx(Tag::kIHead)) = kCrfMasked;
    }
    if (f != Tag::kBTail && f != Tag::kITail && f != Tag::kX) {
      t.at(from, idx(Tag::kITail)) = kCrfMasked;
    }
  }
  t.at(idx(Tag::kStart), idx(Tag::kX)) = kCrfMasked;
  return t;
}

}  // namespace mpe
