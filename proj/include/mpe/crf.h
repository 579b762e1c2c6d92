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

#ifndef MPE_CRF_H_
#define MPE_CRF_H_

#include <cstddef>
#include <span>
#include <vector>

#include "mpe/autodiff.h"
#include "mpe/tags.h"
#include "mpe/tensor.h"

namespace mpe {

// Linear-chain CRF over P positions and L labels. Emissions E are P x L
// (E.at(i, y) scores label y at position i); transitions T are L x L with
// T.at(from, to). Score(y) = sum_i E[i, y_i] + sum_i T[y_i, y_{i+1}].

// Stand-in for -infinity in masks and structural initialization.
inline constexpr double kCrfMasked = -1e4;

double PathScore(const Tensor& emissions, const Tensor& transitions,
                 std::span<const size_t> labels);

// log sum_y exp(Score(y)) by the forward algorithm in log space.
double LogPartition(const Tensor& emissions, const Tensor& transitions);

// LogPartition - PathScore(gold). Throws DataError on a length mismatch or a
// label outside [0, L).
double CrfNll(const Tensor& emissions, const Tensor& transitions,
              std::span<const size_t> gold);

struct ViterbiResult {
  std::vector<size_t> labels;
  double score = 0.0;
};

// Highest-scoring path. Among exactly tied paths the one with the lowest
// label at the latest position where they differ wins.
ViterbiResult Viterbi(const Tensor& emissions, const Tensor& transitions);

// Highest-scoring path among well-formed tag sequences over the 8-label
// scheme: continuation subtokens take X and word starts never do, I-Head and
// I-Tail only continue a run of their role (across X), and B-Head and B-Tail
// occur exactly once. Scores are those of Viterbi; the search tracks the
// current run and which roles have begun. Falls back to Viterbi when the
// sentence has fewer than two words.
ViterbiResult StructuredViterbi(const Tensor& emissions, const Tensor& transitions,
                                const SubtokenMap& sub);

// Posterior marginals: node(i, y) and the expected transition counts
// summed over positions. These are the gradients of LogPartition.
struct CrfMarginals {
  Tensor node;         // P x L
  Tensor transitions;  // L x L
};
CrfMarginals Marginals(const Tensor& emissions, const Tensor& transitions);

// Differentiable versions on the tape.
Var CrfPathScore(Var emissions, Var transitions, std::span<const size_t> labels);
Var CrfLogPartition(Var emissions, Var transitions);
Var CrfNllLoss(Var emissions, Var transitions, std::span<const size_t> gold);

// Masks for the 8-label entity scheme (see tags.h). The transition mask
// forbids entering the start label and leaving the end label; the emission
// mask pins position 0 to the start label and the last of n + 2 positions to
// the end label, and keeps both off the inner positions.
Tensor TransitionMask();
Tensor BoundaryEmissionMask(size_t subtokens);
// Trainable transition initialization: 0 everywhere except structurally
// invalid moves (I-Head not after B-Head/I-Head/X, I-Tail likewise, X right
// after the start label), which start at kCrfMasked.
Tensor InitialTransitions();

}  // namespace mpe

#endif  // MPE_CRF_H_
