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

#include "mpe/evaluate.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "json.hpp"
#include "mpe/error.h"

namespace mpe {
namespace {

LevelSummary SummarizeLevel(const std::vector<EpisodeMetrics>& eps, Level level) {
  LevelSummary s;
  if (eps.empty()) return s;
  double sum = 0.0;
  for (const auto& m : eps) {
    sum += m.at(level).f1();
    s.pooled += m.at(level);
  }
  s.mean = sum / static_cast<double>(eps.size());
  double sq = 0.0;
  for (const auto& m : eps) {
    const double d = m.at(level).f1() - s.mean;
    sq += d * d;
  }
  s.stddev = std::sqrt(sq / static_cast<double>(eps.size()));
  return s;
}

nlohmann::json SpanJson(const Span& s) { return nlohmann::json::array({s.first, s.last}); }

nlohmann::json TensorJson(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (size_t r = 0; r < t.rows(); ++r) {
    auto row = t.row(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

EpisodeConfig EpisodeFor(const EvalSettings& s, size_t index) {
  EpisodeConfig cfg;
  cfg.n_way = s.n_way;
  cfg.k_shot = s.k_shot;
  cfg.r_query = s.r_query;
  cfg.seed = EpisodeSeed(s.seed, index);
  cfg.Validate();
  return cfg;
}

}  // namespace

uint64_t EpisodeSeed(uint64_t base, size_t index) {
  // splitmix64 finalizer over base + golden-ratio stride.
  uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const LevelSummary& EvalResult::at(Level l) const {
  switch (l) {
    case Level::kEntity: return entity;
    case Level::kRelation: return relation;
    case Level::kTriple: break;
  }
  return triple;
}

EvalResult Summarize(std::vector<EpisodeMetrics> episodes) {
  EvalResult r;
  r.entity = SummarizeLevel(episodes, Level::kEntity);
  r.relation = SummarizeLevel(episodes, Level::kRelation);
  r.triple = SummarizeLevel(episodes, Level::kTriple);
  r.episodes = std::move(episodes);
  return r;
}

std::vector<GoldTriple> GoldTriples(const Episode& episode) {
  std::vector<GoldTriple> gold;
  for (const auto& q : episode.query) gold.push_back({q.head, q.tail, q.relation});
  return gold;
}

std::vector<PredictedTriple> PredictedTriples(const Episode& episode,
                                              const std::vector<QueryPrediction>& preds) {
  std::vector<PredictedTriple> out;
  for (const auto& p : preds) {
    out.push_back({p.head, p.tail, episode.roster.at(p.relation), p.distances});
  }
  return out;
}

EpisodeMetrics EvaluateEpisode(Model& model, const Episode& episode, std::string name) {
  const auto preds = PredictedTriples(episode, model.Predict(episode));
  const auto gold = GoldTriples(episode);
  return ScoreEpisode(std::move(name), preds, gold);
}

EvalResult Evaluate(Model& model, const Corpus& corpus, const EvalSettings& settings) {
  std::vector<EpisodeMetrics> metrics(settings.episodes);
  // Sample up front so sampling errors surface on the calling thread.
  std::vector<Episode> episodes;
  episodes.reserve(settings.episodes);
  for (size_t i = 0; i < settings.episodes; ++i) {
    episodes.push_back(SampleEpisode(corpus, EpisodeFor(settings, i)));
  }
  auto work = [&](size_t begin, size_t stride) {
    for (size_t i = begin; i < episodes.size(); i += stride) {
      metrics[i] = EvaluateEpisode(model, episodes[i], "episode-" + std::to_string(i));
    }
  };
  const size_t threads = std::max<size_t>(1, std::min(settings.threads, episodes.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return Summarize(std::move(metrics));
}

const char* AblationName(AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: return "full";
    case AblationVariant::kNoCrf: return "no_crf";
    case AblationVariant::kNoAtt: return "no_att";
    case AblationVariant::kNoIntra: return "no_intra";
    case AblationVariant::kNoInter: return "no_inter";
  }
  return "?";
}

AblationVariant ParseAblation(const std::string& name) {
  for (AblationVariant v : AllAblations()) {
    if (name == AblationName(v)) return v;
  }
  throw UsageError("unknown ablation variant '" + name +
                   "' (expected full, no_crf, no_att, no_intra or no_inter)");
}

std::vector<AblationVariant> AllAblations() {
  return {AblationVariant::kFull, AblationVariant::kNoCrf, AblationVariant::kNoAtt,
          AblationVariant::kNoIntra, AblationVariant::kNoInter};
}

ModelConfig Ablate(ModelConfig base, AblationVariant v) {
  switch (v) {
    case AblationVariant::kFull: break;
    case AblationVariant::kNoCrf: base.tagger = Tagger::kSoftmax; break;
    case AblationVariant::kNoAtt: base.attention = false; break;
    case AblationVariant::kNoIntra: base.weights.use_intra = false; break;
    case AblationVariant::kNoInter: base.weights.use_inter = false; break;
  }
  return base;
}

void DumpPredictions(Model& model, const Corpus& corpus, const EvalSettings& settings,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions to " + path);
  for (size_t i = 0; i < settings.episodes; ++i) {
    const Episode ep = SampleEpisode(corpus, EpisodeFor(settings, i));
    const auto preds = model.Predict(ep);
    for (size_t j = 0; j < ep.query.size(); ++j) {
      const SentenceInstance& q = ep.query[j];
      const QueryPrediction& p = preds[j];
      nlohmann::json rec;
      rec["episode"] = i;
      rec["query"] = j;
      rec["id"] = q.id;
      rec["tokens"] = q.tokens;
      rec["roster"] = ep.roster;
      rec["gold"] = {{"head", SpanJson(q.head)}, {"tail", SpanJson(q.tail)},
                     {"relation", q.relation}};
      rec["predicted"] = {{"head", SpanJson(p.head)},
                          {"tail", SpanJson(p.tail)},
                          {"relation", ep.roster[p.relation]},
                          {"head_fallback", p.head_fallback},
                          {"tail_fallback", p.tail_fallback}};
      rec["distances"] = p.distances;
      rec["tags"] = TagsToString(p.tags);
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

void DumpPrototypes(Model& model, const Episode& episode, const std::string& path) {
  const Model::PrototypeDump d = model.MeanPrototypeValues(episode);
  nlohmann::json j;
  j["roster"] = episode.roster;
  j["head"] = TensorJson(d.head);
  j["tail"] = TensorJson(d.tail);
  j["sentence"] = TensorJson(d.sentence);
  j["kg"] = TensorJson(d.kg);
  j["relation"] = TensorJson(d.relation);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write prototypes to " + path);
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace mpe
