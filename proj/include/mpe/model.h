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

#ifndef MPE_MODEL_H_
#define MPE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mpe/autodiff.h"
#include "mpe/encoder.h"
#include "mpe/episode.h"
#include "mpe/proto.h"
#include "mpe/tags.h"

namespace mpe {

enum class Tagger { kCrf, kSoftmax };
const char* TaggerName(Tagger t);
Tagger ParseTagger(const std::string& name);

// Which sentences of an episode contribute to the tagging loss.
enum class CrfScope { kAll, kSupport, kQuery };
const char* CrfScopeName(CrfScope s);
CrfScope ParseCrfScope(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  RelationFeatures relation_features = RelationFeatures::kMulti;
  bool attention = true;
  Tagger tagger = Tagger::kCrf;
  // CRF decoding restricted to well-formed tag sequences.
  bool structured_decoding = true;
  InterMode inter_mode = InterMode::kRepel;
  CrfScope crf_scope = CrfScope::kAll;
  LossWeights weights;
};

// Desk-scale model for the synthetic corpus: the regularizer weight drops to
// 0.1, since at weight 1 the intra-class term shrinks the from-scratch
// encoder's representations before the prototype losses separate classes.
ModelConfig DeskModelConfig();

// Differentiable loss terms of one episode. `tagging` is the CRF negative
// log-likelihood (or the per-token cross-entropy of the softmax tagger),
// averaged over the sentences in scope.
struct EpisodeLoss {
  Var tagging;
  Var entity;
  Var relation;
  Var intra;
  Var inter;
  Var total;

  LossBundle Bundle() const;
};

// Inference output for one query.
struct QueryPrediction {
  Span head;
  Span tail;
  size_t relation = 0;            // roster index
  std::vector<double> distances;  // squared relation-space distance per class
  TagSequence tags;               // decoded labels
  bool head_fallback = false;     // span came from the emission fallback
  bool tail_fallback = false;
};

// Tagger + hybrid prototype network on top of an embedding source. The
// prototype-side parameters are the emission projection, the transitions
// and W_r.
class Model {
 public:
  Model(ModelConfig cfg, std::unique_ptr<EmbeddingSource> source, uint64_t seed);

  // Training objective on one episode; gold spans feed the prototype terms.
  EpisodeLoss Loss(Tape& tape, const Episode& episode, bool training, std::mt19937_64& rng);

  // Evaluation-mode inference. Support spans are gold; query spans are
  // decoded. Safe to call concurrently.
  std::vector<QueryPrediction> Predict(const Episode& episode);

  // Per-class prototypes of an episode's support set (means), for dumps.
  struct PrototypeDump {
    Tensor head, tail, sentence, kg, relation;
  };
  PrototypeDump MeanPrototypeValues(const Episode& episode);

  std::vector<Parameter*> parameters();
  const ModelConfig& config() const { return cfg_; }
  ModelConfig& mutable_config() { return cfg_; }
  EmbeddingSource& source() { return *source_; }
  ProtoStats& stats() { return stats_; }

  // Word-level spans from decoded tags plus the emission fallback: a missing
  // head (tail) becomes the single word whose first subtoken has the highest
  // B-Head (B-Tail) emission, avoiding the other span when possible.
  static void ResolveSpans(const TagSequence& tags, const Tensor& emissions,
                           const SubtokenMap& map, QueryPrediction* out);

  // Checkpoint directory: manifest.txt, vocab.txt (trainable encoder) and one
  // MPET file per parameter.
  void Save(const std::string& dir) const;
  // Restores a checkpoint; `embeddings` must be given for a model over
  // precomputed embeddings.
  static std::unique_ptr<Model> Load(const std::string& dir,
                                     const std::string& embeddings = "");

 private:
  struct Encoded;
  Encoded EncodeEpisode(Tape& tape, const Episode& episode, bool training, std::mt19937_64& rng);
  Var TransitionsWithMask(Tape& tape);

  ModelConfig cfg_;
  std::unique_ptr<EmbeddingSource> source_;
  Parameter emission_weight_;
  Parameter emission_bias_;
  Parameter transitions_;
  Parameter relation_matrix_;
  ProtoStats stats_;
  std::string embeddings_path_;
};

}  // namespace mpe

#endif  // MPE_MODEL_H_
