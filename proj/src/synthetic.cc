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

#include "mpe/synthetic.h"

#include <algorithm>
#include <cstdio>
#include <random>

#include "mpe/error.h"

namespace mpe {
namespace {

constexpr size_t kMinFillers = 16;
constexpr size_t kMinNamesPerType = 4;

size_t TriggerPoolSize(size_t relations) {
  size_t p = 4;
  while (p * (p - 1) / 2 < relations) ++p;
  return p;
}

size_t Uniform(std::mt19937_64& rng, size_t n) {
  return std::uniform_int_distribution<size_t>(0, n - 1)(rng);
}

}  // namespace

SynthVocabulary PlanSynthVocabulary(const SynthConfig& cfg) {
  if (cfg.relations == 0) throw DataError("synthetic corpus needs at least one relation");
  if (cfg.entity_types < 2) throw DataError("synthetic corpus needs at least two entity types");
  if (cfg.max_entity_words == 0) throw DataError("max_entity_words must be positive");
  if (cfg.noise < 0.0 || cfg.noise > 1.0) throw DataError("noise must lie in [0, 1]");
  if (cfg.type_noise < 0.0 || cfg.type_noise > 1.0) {
    throw DataError("type_noise must lie in [0, 1]");
  }
  const size_t markers = 2 * cfg.entity_types;
  const size_t triggers = TriggerPoolSize(cfg.relations);
  const size_t need = markers + triggers + kMinFillers + kMinNamesPerType * cfg.entity_types;
  if (cfg.vocab_size < need) {
    throw DataError("vocabulary of " + std::to_string(cfg.vocab_size) + " words is too small for " +
                    std::to_string(cfg.relations) + " relations (need at least " +
                    std::to_string(need) + ")");
  }
  const size_t rest = cfg.vocab_size - markers - triggers;
  size_t names_per_type = std::max(kMinNamesPerType, (rest * 2 / 5) / cfg.entity_types);
  if (rest - names_per_type * cfg.entity_types < kMinFillers) {
    names_per_type = (rest - kMinFillers) / cfg.entity_types;
  }
  const size_t fillers = rest - names_per_type * cfg.entity_types;

  SynthVocabulary v;
  for (size_t i = 0; i < fillers; ++i) v.fillers.push_back("f" + std::to_string(i));
  for (size_t i = 0; i < triggers; ++i) v.triggers.push_back("r" + std::to_string(i));
  v.names.resize(cfg.entity_types);
  for (size_t t = 0; t < cfg.entity_types; ++t) {
    for (size_t i = 0; i < names_per_type; ++i) {
      v.names[t].push_back("N" + std::to_string(t) + "n" + std::to_string(i));
    }
    v.head_markers.push_back("hx" + std::to_string(t));
    v.tail_markers.push_back("tx" + std::to_string(t));
  }
  return v;
}

Corpus GenerateSynthetic(const SynthConfig& cfg, uint64_t seed) {
  const SynthVocabulary vocab = PlanSynthVocabulary(cfg);
  std::mt19937_64 rng(seed);

  struct RelationSpec {
    size_t trigger_a, trigger_b, head_type, tail_type;
    bool head_first;
  };
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t a = 0; a < vocab.triggers.size(); ++a) {
    for (size_t b = a + 1; b < vocab.triggers.size(); ++b) pairs.emplace_back(a, b);
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  std::vector<RelationSpec> specs;
  for (size_t r = 0; r < cfg.relations; ++r) {
    RelationSpec s;
    s.trigger_a = pairs[r].first;
    s.trigger_b = pairs[r].second;
    s.head_type = Uniform(rng, cfg.entity_types);
    s.tail_type = (s.head_type + 1 + Uniform(rng, cfg.entity_types - 1)) % cfg.entity_types;
    s.head_first = Uniform(rng, 2) == 0;
    specs.push_back(s);
  }

  std::bernoulli_distribution corrupt(cfg.noise);
  std::bernoulli_distribution rare(cfg.rare_name_rate);
  std::bernoulli_distribution retype(cfg.type_noise);
  const char* kLetters = "abcdefghijklmnopqrstuvwxyz";

  auto fill = [&](std::vector<std::string>& out) {
    const size_t n = Uniform(rng, cfg.max_filler + 1);
    for (size_t i = 0; i < n; ++i) out.push_back(vocab.fillers[Uniform(rng, vocab.fillers.size())]);
  };
  auto entity = [&](std::vector<std::string>& out, const std::string& marker, size_t type) {
    out.push_back(marker);
    const size_t first = out.size();
    const size_t words = 1 + Uniform(rng, cfg.max_entity_words);
    for (size_t i = 0; i < words; ++i) {
      std::string w = vocab.names[type][Uniform(rng, vocab.names[type].size())];
      if (rare(rng)) {
        w += "q";
        const size_t len = 2 + Uniform(rng, 2);
        for (size_t k = 0; k < len; ++k) w += kLetters[Uniform(rng, 26)];
      }
      out.push_back(std::move(w));
    }
    return Span{first, out.size() - 1};
  };

  Corpus::Groups groups;
  for (size_t r = 0; r < cfg.relations; ++r) {
    const RelationSpec& s = specs[r];
    char name[24];
    std::snprintf(name, sizeof(name), "R%02zu", r);
    auto& group = groups[name];
    for (size_t i = 0; i < cfg.per_relation; ++i) {
      SentenceInstance inst;
      inst.relation = name;
      inst.id = std::string(name) + "#" + std::to_string(i);
      const bool drop = corrupt(rng);
      const size_t dropped = Uniform(rng, 2);
      const bool distract = corrupt(rng);
      size_t head_type = s.head_type, tail_type = s.tail_type;
      if (retype(rng)) {
        head_type = Uniform(rng, cfg.entity_types);
        tail_type = (head_type + 1 + Uniform(rng, cfg.entity_types - 1)) % cfg.entity_types;
      }
      std::vector<std::string>& w = inst.tokens;

      fill(w);
      Span first_span = s.head_first ? entity(w, vocab.head_markers[head_type], head_type)
                                     : entity(w, vocab.tail_markers[tail_type], tail_type);
      fill(w);
      if (!(drop && dropped == 0)) w.push_back(vocab.triggers[s.trigger_a]);
      fill(w);
      if (!(drop && dropped == 1)) w.push_back(vocab.triggers[s.trigger_b]);
      fill(w);
      Span second_span = s.head_first ? entity(w, vocab.tail_markers[tail_type], tail_type)
                                      : entity(w, vocab.head_markers[head_type], head_type);
      fill(w);
      if (distract) {
        // Distractors go at the very end so spans stay valid.
        w.push_back(vocab.triggers[Uniform(rng, vocab.triggers.size())]);
        fill(w);
      }
      inst.head = s.head_first ? first_span : second_span;
      inst.tail = s.head_first ? second_span : first_span;
      ValidateInstance(inst, inst.id);
      group.push_back(std::move(inst));
    }
  }
  return Corpus(std::move(groups));
}

}  // namespace mpe
