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

#include "mpe/model.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mpe/config.h"
#include "mpe/crf.h"
#include "mpe/error.h"

namespace mpe {
namespace {

Tensor UniformMatrix(size_t rows, size_t cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t = Tensor::Matrix(rows, cols);
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::vector<size_t> LabelIndices(const TagSequence& tags) {
  std::vector<size_t> y;
  y.reserve(tags.size());
  for (Tag t : tags) y.push_back(TagIndex(t));
  return y;
}

size_t Position(const TagSequence& tags, Tag t) {
  return static_cast<size_t>(std::find(tags.begin(), tags.end(), t) - tags.begin());
}

}  // namespace

const char* TaggerName(Tagger t) { return t == Tagger::kCrf ? "crf" : "softmax"; }

Tagger ParseTagger(const std::string& name) {
  if (name == "crf") return Tagger::kCrf;
  if (name == "softmax") return Tagger::kSoftmax;
  throw UsageError("tagger must be crf or softmax (got '" + name + "')");
}

ModelConfig DeskModelConfig() {
  ModelConfig c;
  c.weights.delta = 0.1;
  return c;
}

const char* CrfScopeName(CrfScope s) {
  switch (s) {
    case CrfScope::kAll: return "all";
    case CrfScope::kSupport: return "support";
    case CrfScope::kQuery: return "query";
  }
  return "?";
}

CrfScope ParseCrfScope(const std::string& name) {
  if (name == "all" || name == "both") return CrfScope::kAll;
  if (name == "support") return CrfScope::kSupport;
  if (name == "query") return CrfScope::kQuery;
  throw UsageError("crf_scope must be all, support or query (got '" + name + "')");
}

LossBundle EpisodeLoss::Bundle() const {
  LossBundle b;
  b.crf = tagging.scalar();
  b.entity = entity.scalar();
  b.relation = relation.scalar();
  b.intra = intra.valid() ? intra.scalar() : 0.0;
  b.inter = inter.valid() ? inter.scalar() : 0.0;
  b.total = total.scalar();
  return b;
}

Model::Model(ModelConfig cfg, std::unique_ptr<EmbeddingSource> source, uint64_t seed)
    : cfg_(std::move(cfg)),
      source_(std::move(source)),
      emission_weight_("proto.emission_weight", Tensor()),
      emission_bias_("proto.emission_bias", Tensor::Matrix(1, kNumTags)),
      transitions_("proto.transitions", InitialTransitions()),
      relation_matrix_("proto.relation_matrix", Tensor()) {
  if (!source_) throw UsageError("model needs an embedding source");
  const size_t d = source_->width();
  // Offset from the encoder's stream so both inits stay independent.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  emission_weight_ = Parameter("proto.emission_weight",
                               UniformMatrix(d, kNumTags, std::sqrt(6.0 / (d + kNumTags)), rng));
  relation_matrix_ = Parameter("proto.relation_matrix",
                               UniformMatrix(d, d, std::sqrt(6.0 / (d + d)), rng));
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = source_->parameters();
  out.push_back(&emission_weight_);
  out.push_back(&emission_bias_);
  out.push_back(&transitions_);
  out.push_back(&relation_matrix_);
  return out;
}

Var Model::TransitionsWithMask(Tape& tape) {
  return Add(tape.Param(transitions_), tape.Constant(TransitionMask()));
}

struct Model::Encoded {
  std::vector<PreparedSentence> prepared;  // supports class-major, then queries
  EncodedBatch batch;
  Var emissions;                           // all rows x kNumTags, unmasked
  size_t n_support = 0;

  // Masked (n + 2) x kNumTags emissions of sentence s.
  Var SentenceEmissions(Tape& tape, size_t s) const {
    std::vector<size_t> rows;
    for (size_t r = batch.offsets[s]; r < batch.offsets[s + 1]; ++r) rows.push_back(r);
    return Add(GatherRows(emissions, rows),
               tape.Constant(BoundaryEmissionMask(prepared[s].map.num_subtokens())));
  }
};

Model::Encoded Model::EncodeEpisode(Tape& tape, const Episode& episode, bool training,
                                    std::mt19937_64& rng) {
  Encoded enc;
  for (const auto& cls : episode.support) {
    for (const auto& inst : cls) enc.prepared.push_back(source_->Prepare(inst));
  }
  enc.n_support = enc.prepared.size();
  for (const auto& inst : episode.query) enc.prepared.push_back(source_->Prepare(inst));
  std::vector<const PreparedSentence*> ptrs;
  for (const auto& p : enc.prepared) ptrs.push_back(&p);
  enc.batch = source_->Encode(tape, ptrs, training, rng);
  enc.emissions = AddBias(MatMul(enc.batch.rows, tape.Param(emission_weight_)),
                          tape.Param(emission_bias_));
  return enc;
}

EpisodeLoss Model::Loss(Tape& tape, const Episode& episode, bool training, std::mt19937_64& rng) {
  const size_t n = episode.n_way();
  if (n < 2) throw UsageError("episode needs at least 2 classes");
  Encoded enc = EncodeEpisode(tape, episode, training, rng);
  Var transitions = TransitionsWithMask(tape);
  Var w_r = tape.Param(relation_matrix_);

  std::vector<const SentenceInstance*> insts;
  for (const auto& cls : episode.support) {
    for (const auto& inst : cls) insts.push_back(&inst);
  }
  for (const auto& inst : episode.query) insts.push_back(&inst);

  std::vector<TagSequence> gold;
  for (size_t s = 0; s < insts.size(); ++s) gold.push_back(ToTagSequence(*insts[s], enc.prepared[s].map));

  // Tagging loss.
  std::vector<Var> tag_terms;
  for (size_t s = 0; s < insts.size(); ++s) {
    const bool is_support = s < enc.n_support;
    if (cfg_.crf_scope == CrfScope::kSupport && !is_support) continue;
    if (cfg_.crf_scope == CrfScope::kQuery && is_support) continue;
    Var e = enc.SentenceEmissions(tape, s);
    const std::vector<size_t> y = LabelIndices(gold[s]);
    if (cfg_.tagger == Tagger::kCrf) {
      tag_terms.push_back(CrfNllLoss(e, transitions, y));
    } else {
      std::vector<Var> pos;
      for (size_t i = 1; i + 1 < y.size(); ++i) {
        pos.push_back(Pick(LogSoftmax(Row(e, i)), y[i]));
      }
      tag_terms.push_back(Scale(AddN(pos), -1.0));
    }
  }
  EpisodeLoss loss;
  loss.tagging = Scale(AddN(tag_terms), 1.0 / static_cast<double>(tag_terms.size()));

  // Span representations from gold tags.
  std::vector<SpanRep> reps;
  for (size_t s = 0; s < insts.size(); ++s) {
    reps.push_back(SpanRepAt(enc.batch.rows, enc.batch.row(s, 0),
                             enc.batch.row(s, Position(gold[s], Tag::kBHead)),
                             enc.batch.row(s, Position(gold[s], Tag::kBTail))));
  }
  std::vector<std::vector<SpanRep>> support(n);
  size_t s = 0;
  for (size_t c = 0; c < n; ++c) {
    for (size_t k = 0; k < episode.support[c].size(); ++k) support[c].push_back(reps[s++]);
  }
  std::vector<SpanRep> queries(reps.begin() + static_cast<long>(enc.n_support), reps.end());

  const RelationFeatures features = cfg_.relation_features;
  PrototypeSet mean_set = BuildPrototypes(support, w_r, features, nullptr, &stats_);
  std::vector<PrototypeSet> per_query;
  std::vector<Var> query_vectors;
  for (const SpanRep& q : queries) {
    per_query.push_back(cfg_.attention
                            ? BuildPrototypes(support, w_r, features, &q.sentence, &stats_)
                            : mean_set);
    query_vectors.push_back(RelationVector(q.sentence, q.head, q.tail, w_r, features));
  }
  loss.entity = EntityLoss(queries, episode.query_class, per_query);
  loss.relation = RelationLoss(query_vectors, episode.query_class, per_query);

  // Regularizers live in relation space around the mean prototypes.
  if (cfg_.weights.use_intra) {
    std::vector<std::vector<Var>> instances(n);
    for (size_t c = 0; c < n; ++c) {
      for (const SpanRep& r : support[c]) {
        instances[c].push_back(RelationVector(r.sentence, r.head, r.tail, w_r, features));
      }
    }
    loss.intra = IntraLoss(instances, mean_set.relation);
  }
  if (cfg_.weights.use_inter) loss.inter = InterLoss(mean_set.relation, cfg_.inter_mode);
  loss.total = AssembleTotal(loss.tagging, loss.entity, loss.relation, loss.intra, loss.inter,
                             cfg_.weights);
  return loss;
}

void Model::ResolveSpans(const TagSequence& tags, const Tensor& emissions, const SubtokenMap& map,
                         QueryPrediction* out) {
  DecodedSpans spans = SpansFromTags(tags, map);
  auto fallback = [&](Tag label, const std::optional<Span>& avoid) {
    size_t best = map.num_words();
    double top = -std::numeric_limits<double>::infinity();
    for (size_t pass = 0; pass < 2 && best == map.num_words(); ++pass) {
      for (size_t w = 0; w < map.num_words(); ++w) {
        if (pass == 0 && avoid && avoid->Contains(w)) continue;
        const double e = emissions.at(map.first_subtoken(w) + 1, TagIndex(label));
        if (e > top) {
          top = e;
          best = w;
        }
      }
    }
    return Span{best, best};
  };
  out->head_fallback = !spans.head.has_value();
  if (!spans.head) spans.head = fallback(Tag::kBHead, spans.tail);
  out->tail_fallback = !spans.tail.has_value();
  if (!spans.tail) spans.tail = fallback(Tag::kBTail, spans.head);
  out->head = *spans.head;
  out->tail = *spans.tail;
}

std::vector<QueryPrediction> Model::Predict(const Episode& episode) {
  const size_t n = episode.n_way();
  Tape tape(/*grad_enabled=*/false);
  std::mt19937_64 rng(0);
  Encoded enc = EncodeEpisode(tape, episode, /*training=*/false, rng);
  const Tensor transitions = TransitionsWithMask(tape).value();
  Var w_r = tape.Param(relation_matrix_);

  std::vector<std::vector<SpanRep>> support(n);
  size_t s = 0;
  for (size_t c = 0; c < n; ++c) {
    for (const auto& inst : episode.support[c]) {
      const TagSequence tags = ToTagSequence(inst, enc.prepared[s].map);
      support[c].push_back(SpanRepAt(enc.batch.rows, enc.batch.row(s, 0),
                                     enc.batch.row(s, Position(tags, Tag::kBHead)),
                                     enc.batch.row(s, Position(tags, Tag::kBTail))));
      ++s;
    }
  }
  const RelationFeatures features = cfg_.relation_features;
  std::optional<PrototypeSet> mean_set;
  if (!cfg_.attention) mean_set = BuildPrototypes(support, w_r, features, nullptr, &stats_);

  std::vector<QueryPrediction> out;
  for (size_t j = 0; j < episode.query.size(); ++j, ++s) {
    const PreparedSentence& prep = enc.prepared[s];
    const Tensor e = enc.SentenceEmissions(tape, s).value();
    QueryPrediction pred;
    pred.tags.resize(e.rows());
    if (cfg_.tagger == Tagger::kCrf) {
      const ViterbiResult v = cfg_.structured_decoding
                                  ? StructuredViterbi(e, transitions, prep.map)
                                  : Viterbi(e, transitions);
      for (size_t i = 0; i < v.labels.size(); ++i) pred.tags[i] = TagFromIndex(v.labels[i]);
    } else {
      for (size_t i = 0; i < e.rows(); ++i) {
        auto row = e.row(i);
        pred.tags[i] = TagFromIndex(
            static_cast<size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
      }
    }
    ResolveSpans(pred.tags, e, prep.map, &pred);
    const SpanRep q = SpanRepAt(enc.batch.rows, enc.batch.row(s, 0),
                                enc.batch.row(s, prep.map.first_subtoken(pred.head.first) + 1),
                                enc.batch.row(s, prep.map.first_subtoken(pred.tail.first) + 1));
    const PrototypeSet protos =
        cfg_.attention ? BuildPrototypes(support, w_r, features, &q.sentence, &stats_) : *mean_set;
    const Tensor d =
        SquaredDistances(protos.relation, RelationVector(q.sentence, q.head, q.tail, w_r, features))
            .value();
    pred.distances.assign(d.values().begin(), d.values().end());
    pred.relation = static_cast<size_t>(
        std::min_element(pred.distances.begin(), pred.distances.end()) - pred.distances.begin());
    out.push_back(std::move(pred));
  }
  return out;
}

Model::PrototypeDump Model::MeanPrototypeValues(const Episode& episode) {
  Tape tape(/*grad_enabled=*/false);
  std::mt19937_64 rng(0);
  Encoded enc = EncodeEpisode(tape, episode, /*training=*/false, rng);
  std::vector<std::vector<SpanRep>> support(episode.n_way());
  size_t s = 0;
  for (size_t c = 0; c < episode.n_way(); ++c) {
    for (const auto& inst : episode.support[c]) {
      const TagSequence tags = ToTagSequence(inst, enc.prepared[s].map);
      support[c].push_back(SpanRepAt(enc.batch.rows, enc.batch.row(s, 0),
                                     enc.batch.row(s, Position(tags, Tag::kBHead)),
                                     enc.batch.row(s, Position(tags, Tag::kBTail))));
      ++s;
    }
  }
  PrototypeSet p = BuildPrototypes(support, tape.Param(relation_matrix_), cfg_.relation_features,
                                   nullptr, nullptr);
  return PrototypeDump{p.head.value(), p.tail.value(), p.sentence.value(), p.kg.value(),
                       p.relation.value()};
}

void Model::Save(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create checkpoint directory " + dir + ": " + ec.message());
  auto* self = const_cast<Model*>(this);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw DataError("cannot write " + dir + "/manifest.txt");
  manifest << "# mpe checkpoint\n";
  manifest << RenderModelConfig(cfg_);
  manifest << "\n[checkpoint]\n";
  auto* attention = dynamic_cast<AttentionEncoder*>(source_.get());
  manifest << "encoder = " << (attention ? "trainable" : "precomputed") << '\n';
  manifest << "width = " << source_->width() << '\n';
  for (Parameter* p : self->parameters()) {
    const std::string file = p->name + ".mpet";
    SaveTensor((fs::path(dir) / file).string(), p->value);
    manifest << "param = " << p->name << ' ' << file << '\n';
  }
  if (attention) attention->tokenizer().Save((fs::path(dir) / "vocab.txt").string());
  if (!manifest) throw DataError("failed writing checkpoint manifest");
}

std::unique_ptr<Model> Model::Load(const std::string& dir, const std::string& embeddings) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
  if (!fs::exists(manifest_path)) throw DataError("no checkpoint manifest at " + manifest_path);
  IniFile ini = IniFile::Load(manifest_path);
  IniFile model_part;
  std::string encoder_kind;
  size_t width = 0;
  std::vector<std::pair<std::string, std::string>> params;
  for (const auto& e : ini.entries()) {
    if (e.section != "checkpoint") {
      model_part.Add(e);
      continue;
    }
    if (e.key == "encoder") {
      encoder_kind = e.value;
    } else if (e.key == "width") {
      width = static_cast<size_t>(std::stoull(e.value));
    } else if (e.key == "param") {
      std::istringstream ss(e.value);
      std::string name, file;
      ss >> name >> file;
      params.emplace_back(name, file);
    } else {
      throw DataError(manifest_path + ": unknown checkpoint key '" + e.key + "'");
    }
  }
  ModelConfig cfg = ParseModelConfig(model_part);
  std::unique_ptr<EmbeddingSource> source;
  if (encoder_kind == "trainable") {
    Tokenizer tok = Tokenizer::Load((fs::path(dir) / "vocab.txt").string());
    source = std::make_unique<AttentionEncoder>(std::move(tok), cfg.encoder, 0);
  } else if (encoder_kind == "precomputed") {
    if (embeddings.empty()) throw UsageError("checkpoint uses precomputed embeddings; pass their path");
    source = PrecomputedEmbeddings::Load(embeddings, width);
  } else {
    throw DataError(manifest_path + ": unknown encoder kind '" + encoder_kind + "'");
  }
  auto model = std::make_unique<Model>(cfg, std::move(source), 0);
  model->embeddings_path_ = embeddings;
  std::vector<Parameter*> own = model->parameters();
  if (own.size() != params.size()) {
    throw DataError(manifest_path + ": checkpoint has " + std::to_string(params.size()) +
                    " parameters, model expects " + std::to_string(own.size()));
  }
  for (size_t i = 0; i < own.size(); ++i) {
    if (own[i]->name != params[i].first) {
      throw DataError(manifest_path + ": parameter '" + params[i].first + "' where '" +
                      own[i]->name + "' was expected");
    }
    Tensor t = LoadTensor((fs::path(dir) / params[i].second).string());
    if (!t.SameShape(own[i]->value)) {
      throw DataError("parameter " + own[i]->name + " has shape " + t.ShapeString() +
                      ", expected " + own[i]->value.ShapeString());
    }
    own[i]->value = std::move(t);
  }
  return model;
}

}  // namespace mpe
