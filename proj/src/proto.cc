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

#include "mpe/proto.h"

#include <cmath>

#include "mpe/error.h"

namespace mpe {
namespace {

size_t FindTag(const TagSequence& tags, Tag t) {
  for (size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == t) return i;
  }
  throw DataError(std::string("tag sequence has no ") + TagName(t));
}

Var Attend(std::span<const Var> vectors, Var query) {
  Var stacked = StackRows(vectors);                        // K x d
  if (stacked.cols() != query.cols() || query.rows() != 1) {
    throw NumericError("attentive prototype: query " + query.value().ShapeString() +
                       " does not match support width " + std::to_string(stacked.cols()));
  }
  Var weights = Softmax(MatMul(stacked, Transpose(query)));  // K x 1
  return MatMul(Transpose(weights), stacked);                // 1 x d
}

Var Average(std::span<const Var> vectors) {
  return Scale(AddN(vectors), 1.0 / static_cast<double>(vectors.size()));
}

}  // namespace

SpanRep ExtractSpanReps(Var embedding, const TagSequence& tags) {
  if (tags.size() != embedding.rows()) {
    throw DataError("tag sequence of length " + std::to_string(tags.size()) + " for " +
                    std::to_string(embedding.rows()) + " embedding rows");
  }
  return SpanRepAt(embedding, 0, FindTag(tags, Tag::kBHead), FindTag(tags, Tag::kBTail));
}

SpanRep SpanRepAt(Var rows, size_t sentence_row, size_t head_row, size_t tail_row) {
  return SpanRep{Row(rows, head_row), Row(rows, tail_row), Row(rows, sentence_row)};
}

const char* RelationFeaturesName(RelationFeatures f) {
  switch (f) {
    case RelationFeatures::kMulti: return "multi";
    case RelationFeatures::kSentence: return "sent";
    case RelationFeatures::kKg: return "kg";
  }
  return "?";
}

RelationFeatures ParseRelationFeatures(const std::string& name) {
  if (name == "multi") return RelationFeatures::kMulti;
  if (name == "sent") return RelationFeatures::kSentence;
  if (name == "kg") return RelationFeatures::kKg;
  throw UsageError("relation_features must be multi, sent or kg (got '" + name + "')");
}

ClassPrototypes MeanPrototypes(std::span<const SpanRep> support) {
  if (support.empty()) throw DataError("prototype over an empty support set");
  std::vector<Var> h, t, s;
  for (const SpanRep& r : support) {
    h.push_back(r.head);
    t.push_back(r.tail);
    s.push_back(r.sentence);
  }
  return ClassPrototypes{Average(h), Average(t), Average(s)};
}

ClassPrototypes AttentivePrototypes(std::span<const SpanRep> support, Var query) {
  if (support.empty()) throw DataError("prototype over an empty support set");
  std::vector<Var> h, t, s;
  for (const SpanRep& r : support) {
    h.push_back(r.head);
    t.push_back(r.tail);
    s.push_back(r.sentence);
  }
  return ClassPrototypes{Attend(h, query), Attend(t, query), Attend(s, query)};
}

Var KgPrototype(Var head_proto, Var tail_proto, Var w_r) {
  return MatMul(Abs(Sub(head_proto, tail_proto)), w_r);
}

Var RelationVector(Var sentence, Var head, Var tail, Var w_r, RelationFeatures features) {
  if (features == RelationFeatures::kSentence) return sentence;
  Var kg = KgPrototype(head, tail, w_r);
  if (features == RelationFeatures::kKg) return kg;
  Var parts[] = {sentence, kg};
  return Concat(parts);
}

PrototypeSet BuildPrototypes(const std::vector<std::vector<SpanRep>>& support, Var w_r,
                             RelationFeatures features, const Var* attention_query,
                             ProtoStats* stats) {
  if (support.empty()) throw DataError("prototype set over zero classes");
  std::vector<Var> heads, tails, sents, kgs, rels;
  for (const auto& cls : support) {
    ClassPrototypes p;
    if (attention_query != nullptr) {
      if (stats != nullptr) ++stats->attentive_calls;
      p = AttentivePrototypes(cls, *attention_query);
    } else {
      p = MeanPrototypes(cls);
    }
    heads.push_back(p.head);
    tails.push_back(p.tail);
    sents.push_back(p.sentence);
    Var kg = KgPrototype(p.head, p.tail, w_r);
    kgs.push_back(kg);
    if (features == RelationFeatures::kSentence) {
      rels.push_back(p.sentence);
    } else if (features == RelationFeatures::kKg) {
      rels.push_back(kg);
    } else {
      Var parts[] = {p.sentence, kg};
      rels.push_back(Concat(parts));
    }
  }
  return PrototypeSet{StackRows(heads), StackRows(tails), StackRows(sents), StackRows(kgs),
                      StackRows(rels)};
}

Var DistanceCrossEntropy(Var protos, Var q, size_t gold) {
  if (protos.rows() < 2) {
    throw UsageError("distance cross-entropy needs at least 2 classes, got " +
                     std::to_string(protos.rows()));
  }
  if (gold >= protos.rows()) {
    throw DataError("gold class " + std::to_string(gold) + " not among " +
                    std::to_string(protos.rows()) + " prototypes");
  }
  Var logits = Scale(SquaredDistances(protos, q), -1.0);
  return Sub(LogSumExp(logits), Pick(logits, gold));
}

Var EntityLoss(std::span<const SpanRep> queries, std::span<const size_t> gold,
               std::span<const PrototypeSet> protos) {
  if (queries.empty() || queries.size() != gold.size() || protos.size() != queries.size()) {
    throw DataError("entity loss: misaligned queries, labels and prototypes");
  }
  std::vector<Var> terms;
  for (size_t j = 0; j < queries.size(); ++j) {
    terms.push_back(DistanceCrossEntropy(protos[j].head, queries[j].head, gold[j]));
    terms.push_back(DistanceCrossEntropy(protos[j].tail, queries[j].tail, gold[j]));
  }
  return Scale(AddN(terms), 1.0 / static_cast<double>(terms.size()));
}

Var RelationLoss(std::span<const Var> query_vectors, std::span<const size_t> gold,
                 std::span<const PrototypeSet> protos) {
  if (query_vectors.empty() || query_vectors.size() != gold.size() ||
      protos.size() != query_vectors.size()) {
    throw DataError("relation loss: misaligned queries, labels and prototypes");
  }
  std::vector<Var> terms;
  for (size_t j = 0; j < query_vectors.size(); ++j) {
    if (query_vectors[j].cols() != protos[j].relation.cols()) {
      throw NumericError("relation loss: query width " + std::to_string(query_vectors[j].cols()) +
                         " vs prototype width " + std::to_string(protos[j].relation.cols()));
    }
    terms.push_back(DistanceCrossEntropy(protos[j].relation, query_vectors[j], gold[j]));
  }
  return Scale(AddN(terms), 1.0 / static_cast<double>(terms.size()));
}

Var IntraLoss(const std::vector<std::vector<Var>>& instances, Var protos) {
  if (instances.size() != protos.rows()) {
    throw DataError("intra loss: " + std::to_string(instances.size()) + " classes vs " +
                    std::to_string(protos.rows()) + " prototypes");
  }
  std::vector<Var> terms;
  for (size_t i = 0; i < instances.size(); ++i) {
    Var p = Row(protos, i);
    for (const Var& x : instances[i]) terms.push_back(SquaredNorm(Sub(x, p)));
  }
  if (terms.empty()) throw DataError("intra loss over zero instances");
  return Scale(AddN(terms), 1.0 / static_cast<double>(terms.size()));
}

const char* InterModeName(InterMode m) { return m == InterMode::kPaper ? "paper" : "repel"; }

InterMode ParseInterMode(const std::string& name) {
  if (name == "repel") return InterMode::kRepel;
  if (name == "paper") return InterMode::kPaper;
  throw UsageError("inter_mode must be repel or paper (got '" + name + "')");
}

Var InterLoss(Var protos, InterMode mode) {
  const size_t n = protos.rows();
  if (n < 2) throw UsageError("inter loss needs at least 2 prototypes");
  std::vector<Var> rows;
  for (size_t i = 0; i < n; ++i) rows.push_back(Row(protos, i));
  std::vector<Var> cos;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) cos.push_back(Cosine(rows[i], rows[j]));
  }
  Var sum = AddN(cos);
  if (mode == InterMode::kPaper) {
    return AddScalar(Scale(sum, -1.0 / static_cast<double>(n)), 1.0);
  }
  const double pairs = static_cast<double>(cos.size());
  return AddScalar(Scale(sum, 0.5 / pairs), 0.5);
}

LossBundle AssembleLosses(const LossBundle& c, const LossWeights& w) {
  for (double v : {c.crf, c.entity, c.relation, c.intra, c.inter}) {
    if (!std::isfinite(v)) throw NumericError("loss component is not finite");
  }
  LossBundle out = c;
  const double regular = (w.use_intra ? c.intra : 0.0) + (w.use_inter ? w.alpha * c.inter : 0.0);
  out.total = c.crf + w.beta * c.entity + w.gamma * c.relation + w.delta * regular;
  return out;
}

Var AssembleTotal(Var crf, Var entity, Var relation, Var intra, Var inter, const LossWeights& w) {
  std::vector<Var> terms{crf, Scale(entity, w.beta), Scale(relation, w.gamma)};
  if (w.use_intra && intra.valid()) terms.push_back(Scale(intra, w.delta));
  if (w.use_inter && inter.valid()) terms.push_back(Scale(inter, w.delta * w.alpha));
  return AddN(terms);
}

}  // namespace mpe
