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

#ifndef MPE_METRICS_H_
#define MPE_METRICS_H_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpe/corpus.h"

namespace mpe {

enum class Level { kEntity, kRelation, kTriple };
const char* LevelName(Level l);

// A decoded triple. Missing parts are predictions the model did not make.
struct PredictedTriple {
  std::optional<Span> head;
  std::optional<Span> tail;
  std::optional<std::string> relation;
  std::vector<double> distances;
};

struct GoldTriple {
  Span head;
  Span tail;
  std::string relation;
};

struct LevelCounts {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;

  double precision() const;
  double recall() const;
  // 0 when nothing was predicted correctly.
  double f1() const;
  LevelCounts& operator+=(const LevelCounts& o);
};

// Pooled counts over aligned query lists. Entity level scores head and tail
// as separate units (exact boundaries, correct role); relation level scores
// one label per query; triple level needs both spans and the relation.
// Throws UsageError when the lists differ in length.
LevelCounts MicroF1(std::span<const PredictedTriple> preds, std::span<const GoldTriple> gold,
                    Level level);

struct EpisodeMetrics {
  std::string episode;
  LevelCounts entity;
  LevelCounts relation;
  LevelCounts triple;

  const LevelCounts& at(Level l) const;
};

EpisodeMetrics ScoreEpisode(std::string episode, std::span<const PredictedTriple> preds,
                            std::span<const GoldTriple> gold);

}  // namespace mpe

#endif  // MPE_METRICS_H_
