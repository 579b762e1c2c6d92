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

#ifndef MPE_EVALUATE_H_
#define MPE_EVALUATE_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpe/corpus.h"
#include "mpe/episode.h"
#include "mpe/metrics.h"
#include "mpe/model.h"

namespace mpe {

struct EvalSettings {
  size_t n_way = 5;
  size_t k_shot = 5;
  size_t r_query = 5;
  size_t episodes = 500;
  uint64_t seed = 1;
  size_t threads = 1;
};

// Seed of evaluation episode `index`; independent of thread scheduling.
uint64_t EpisodeSeed(uint64_t base, size_t index);

struct LevelSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population stddev of per-episode F1
  LevelCounts pooled;
};

struct EvalResult {
  LevelSummary entity;
  LevelSummary relation;
  LevelSummary triple;
  std::vector<EpisodeMetrics> episodes;

  const LevelSummary& at(Level l) const;
};

EvalResult Summarize(std::vector<EpisodeMetrics> episodes);

std::vector<GoldTriple> GoldTriples(const Episode& episode);
std::vector<PredictedTriple> PredictedTriples(const Episode& episode,
                                              const std::vector<QueryPrediction>& preds);

// Scores one episode with the inference path.
EpisodeMetrics EvaluateEpisode(Model& model, const Episode& episode, std::string name);

// Samples settings.episodes episodes from `corpus` and reports per-episode
// micro-F1 mean and stddev at each level. Episodes may run on several
// threads; the result does not depend on the thread count.
EvalResult Evaluate(Model& model, const Corpus& corpus, const EvalSettings& settings);

enum class AblationVariant { kFull, kNoCrf, kNoAtt, kNoIntra, kNoInter };
const char* AblationName(AblationVariant v);
AblationVariant ParseAblation(const std::string& name);
std::vector<AblationVariant> AllAblations();
ModelConfig Ablate(ModelConfig base, AblationVariant v);

// One JSON line per query: tokens, gold and predicted triples, per-class
// distances and the decoded tags.
void DumpPredictions(Model& model, const Corpus& corpus, const EvalSettings& settings,
                     const std::string& path);

// Mean prototypes of one episode as JSON.
void DumpPrototypes(Model& model, const Episode& episode, const std::string& path);

}  // namespace mpe

#endif  // MPE_EVALUATE_H_
