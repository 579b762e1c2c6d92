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

#ifndef MPE_SYNTHETIC_H_
#define MPE_SYNTHETIC_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpe/corpus.h"

namespace mpe {

// Settings for the desk-scale synthetic corpus.
//
// Every relation is identified by an unordered pair of trigger words drawn
// from a shared trigger pool, a (head type, tail type) pair and an argument
// order. Entities are 1..max_entity_words name words from a per-type pool,
// introduced by a typed role marker ("hx<type>" before heads, "tx<type>"
// before tails). With probability rare_name_rate a name word gets a random
// suffix so it falls outside any vocabulary and exercises sub-word splits.
// `noise` is the per-sentence probability of each of two corruptions:
// dropping one trigger word, and inserting a distractor trigger word. With
// probability type_noise an instance draws fresh random entity types instead
// of its relation's pair, so every marker and name pool occurs under every
// relation split.
struct SynthConfig {
  size_t relations = 20;
  size_t per_relation = 100;
  size_t vocab_size = 400;
  double noise = 0.1;
  double type_noise = 0.25;
  size_t entity_types = 6;
  size_t max_entity_words = 2;
  double rare_name_rate = 0.15;
  size_t max_filler = 2;  // filler words per gap: 0..max_filler
};

// Layout of the synthetic word inventory for a config.
struct SynthVocabulary {
  std::vector<std::string> fillers;
  std::vector<std::string> triggers;
  std::vector<std::vector<std::string>> names;  // per entity type
  std::vector<std::string> head_markers;        // per entity type
  std::vector<std::string> tail_markers;        // per entity type
};

// Throws DataError when the vocabulary cannot host the requested relations.
SynthVocabulary PlanSynthVocabulary(const SynthConfig& cfg);

Corpus GenerateSynthetic(const SynthConfig& cfg, uint64_t seed);

}  // namespace mpe

#endif  // MPE_SYNTHETIC_H_
