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

#include "mpe/metrics.h"

#include "mpe/error.h"

namespace mpe {

const char* LevelName(Level l) {
  switch (l) {
    case Level::kEntity: return "entity";
    case Level::kRelation: return "relation";
    case Level::kTriple: return "triple";
  }
  return "?";
}

double LevelCounts::precision() const {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double LevelCounts::recall() const {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double LevelCounts::f1() const {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

LevelCounts& LevelCounts::operator+=(const LevelCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

LevelCounts MicroF1(std::span<const PredictedTriple> preds, std::span<const GoldTriple> gold,
                    Level level) {
  if (preds.size() != gold.size()) {
    throw UsageError("micro_f1: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(gold.size()) + " gold triples");
  }
  LevelCounts c;
  auto score = [&c](bool predicted, bool correct) {
    if (predicted && correct) {
      ++c.tp;
    } else {
      if (predicted) ++c.fp;
      ++c.fn;
    }
  };
  for (size_t i = 0; i < preds.size(); ++i) {
    const PredictedTriple& p = preds[i];
    const GoldTriple& g = gold[i];
    switch (level) {
      case Level::kEntity:
        score(p.head.has_value(), p.head == g.head);
        score(p.tail.has_value(), p.tail == g.tail);
        break;
      case Level::kRelation:
        score(p.relation.has_value(), p.relation == g.relation);
        break;
      case Level::kTriple:
        score(p.head && p.tail && p.relation,
              p.head == g.head && p.tail == g.tail && p.relation == g.relation);
        break;
    }
  }
  return c;
}

const LevelCounts& EpisodeMetrics::at(Level l) const {
  switch (l) {
    case Level::kEntity: return entity;
    case Level::kRelation: return relation;
    case Level::kTriple: break;
  }
  return triple;
}

EpisodeMetrics ScoreEpisode(std::string episode, std::span<const PredictedTriple> preds,
                            std::span<const GoldTriple> gold) {
  EpisodeMetrics m;
  m.episode = std::move(episode);
  m.entity = MicroF1(preds, gold, Level::kEntity);
  m.relation = MicroF1(preds, gold, Level::kRelation);
  m.triple = MicroF1(preds, gold, Level::kTriple);
  return m;
}

}  // namespace mpe
