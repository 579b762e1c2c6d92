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

#ifndef MPE_EPISODE_H_
#define MPE_EPISODE_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpe/corpus.h"

namespace mpe {

struct EpisodeConfig {
  size_t n_way = 5;
  size_t k_shot = 5;
  size_t r_query = 5;
  uint64_t seed = 0;

  // Throws UsageError unless N >= 2, K >= 1, R >= 1.
  void Validate() const;
};

// One N-way K-shot task. Instances are copied so an episode outlives the
// corpus it was drawn from.
struct Episode {
  std::vector<std::string> roster;                      // N relation labels
  std::vector<std::vector<SentenceInstance>> support;   // [class][slot], N x K
  std::vector<SentenceInstance> query;                  // R instances
  std::vector<size_t> query_class;                      // roster index per query

  size_t n_way() const { return roster.size(); }
  size_t k_shot() const { return support.empty() ? 0 : support.front().size(); }
};

// Roster drawn uniformly without replacement, supports without replacement
// within each class, queries from the remaining instances of the roster.
// Queries are class-balanced when R is a multiple of N; otherwise each query
// draws its class uniformly from the roster classes that still have unused
// instances. Throws DataError naming the deficient relation when a class
// cannot supply K supports plus its queries.
Episode SampleEpisode(const Corpus& corpus, const EpisodeConfig& cfg);

// Dump format: a JSON roster header line followed by the support and query
// records in canonical form, each tagged with "episode_role".
void SaveEpisode(const std::string& path, const Episode& episode);
Episode LoadEpisode(const std::string& path);

}  // namespace mpe

#endif  // MPE_EPISODE_H_
