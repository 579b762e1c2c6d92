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

#ifndef MPE_PROTO_H_
#define MPE_PROTO_H_

#include <atomic>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mpe/autodiff.h"
#include "mpe/tags.h"

namespace mpe {

// Head, tail and sentence vectors of one sentence, each 1 x d.
struct SpanRep {
  Var head;
  Var tail;
  Var sentence;
};

// Reads the representation rows of a sentence from its (n + 2) x d
// embedding: the B-Head row, the B-Tail row and row 0. Throws DataError when
// either begin label is missing.
SpanRep ExtractSpanReps(Var embedding, const TagSequence& tags);
// Same, for an explicit head/tail row pair inside a stacked batch.
SpanRep SpanRepAt(Var rows, size_t sentence_row, size_t head_row, size_t tail_row);

// Which prototype feeds relation matching.
enum class RelationFeatures { kMulti, kSentence, kKg };
const char* RelationFeaturesName(RelationFeatures f);
RelationFeatures ParseRelationFeatures(const std::string& name);

struct ClassPrototypes {
  Var head;  // 1 x d
  Var tail;
  Var sentence;
};

// Plain averages over the K support instances. Throws DataError when empty.
ClassPrototypes MeanPrototypes(std::span<const SpanRep> support);

// Query-conditioned weighted sums: energies e_k = <support_k, query>,
// weights softmax(e) over the K supports, computed separately for the head,
// tail and sentence vectors. `query` is 1 x d.
ClassPrototypes AttentivePrototypes(std::span<const SpanRep> support, Var query);

// |head - tail| W_r with elementwise absolute value.
Var KgPrototype(Var head_proto, Var tail_proto, Var w_r);

// Relation-space vector for prototypes and instances alike:
// [sentence ; |head - tail| W_r] for kMulti, or either half alone.
Var RelationVector(Var sentence, Var head, Var tail, Var w_r, RelationFeatures features);

// All N class prototypes as stacked rows.
struct PrototypeSet {
  Var head;      // N x d
  Var tail;      // N x d
  Var sentence;  // N x d
  Var kg;        // N x d
  Var relation;  // N x width of RelationVector
};

struct ProtoStats {
  std::atomic<size_t> attentive_calls{0};
};

// Builds the N prototypes from support[class][slot]. With a non-null
// `attention_query` the entity and sentence prototypes are attentive,
// otherwise they are means.
PrototypeSet BuildPrototypes(const std::vector<std::vector<SpanRep>>& support, Var w_r,
                             RelationFeatures features, const Var* attention_query,
                             ProtoStats* stats = nullptr);

// -log softmax(-||protos_c - q||^2)[gold]: cross-entropy over negative
// squared Euclidean distances.
Var DistanceCrossEntropy(Var protos, Var q, size_t gold);

// Mean over queries and the two roles of the head/tail distance
// cross-entropies. protos[j] are the prototypes seen by query j.
Var EntityLoss(std::span<const SpanRep> queries, std::span<const size_t> gold,
               std::span<const PrototypeSet> protos);

// Mean over queries of the relation-space distance cross-entropy;
// query_vectors[j] is the query's RelationVector.
Var RelationLoss(std::span<const Var> query_vectors, std::span<const size_t> gold,
                 std::span<const PrototypeSet> protos);

// (1 / (N K)) sum_i sum_k ||x_i^k - p_i||^2 where p_i is row i of `protos`
// and instances[i] holds the K relation-space vectors of class i.
Var IntraLoss(const std::vector<std::vector<Var>>& instances, Var protos);

enum class InterMode { kRepel, kPaper };
const char* InterModeName(InterMode m);
InterMode ParseInterMode(const std::string& name);

// Over the rows p_1..p_N of `protos`:
//   kPaper: 1 - (1/N) sum_{i<j} cos(p_i, p_j)
//   kRepel: mean over the N(N-1)/2 pairs of (1 + cos(p_i, p_j)) / 2
// A zero prototype contributes cosine 0. Throws UsageError when N < 2.
Var InterLoss(Var protos, InterMode mode);

struct LossWeights {
  double alpha = 0.75;  // inter inside the regularizer
  double beta = 0.5;    // entity
  double gamma = 0.8;   // relation
  double delta = 1.0;   // regularizer
  bool use_intra = true;
  bool use_inter = true;
};

struct LossBundle {
  double crf = 0.0;
  double entity = 0.0;
  double relation = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double total = 0.0;
};

// total = crf + beta entity + gamma relation + delta (intra + alpha inter),
// with disabled regularizer terms dropped. Throws NumericError on a
// non-finite component.
LossBundle AssembleLosses(const LossBundle& components, const LossWeights& w);
Var AssembleTotal(Var crf, Var entity, Var relation, Var intra, Var inter, const LossWeights& w);

}  // namespace mpe

#endif  // MPE_PROTO_H_
