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

#ifndef MPE_CORPUS_H_
#define MPE_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mpe {

// Inclusive word-index range.
struct Span {
  size_t first = 0;
  size_t last = 0;

  size_t length() const { return last - first + 1; }
  bool Contains(size_t i) const { return i >= first && i <= last; }
  bool Overlaps(const Span& o) const { return first <= o.last && o.first <= last; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

// One sentence with a single <head, relation, tail> triple.
struct SentenceInstance {
  std::string id;
  std::vector<std::string> tokens;
  Span head;
  Span tail;
  std::string relation;
};

// Throws DataError (prefixed with `where`) unless spans are in bounds,
// ordered, non-overlapping and the relation is non-empty.
void ValidateInstance(const SentenceInstance& inst, const std::string& where);

enum class Split { kNone, kTrain, kValid, kTest };

const char* SplitName(Split s);
Split ParseSplit(const std::string& name);

// Instances grouped by relation label. Immutable after construction.
class Corpus {
 public:
  using Groups = std::map<std::string, std::vector<SentenceInstance>>;

  Corpus() = default;
  // Throws DataError on an empty group or an instance whose relation does not
  // match its group key.
  explicit Corpus(Groups groups, Split split = Split::kNone);

  Split split() const { return split_; }
  const Groups& groups() const { return groups_; }
  // Sorted relation labels.
  std::vector<std::string> relations() const;
  const std::vector<SentenceInstance>& group(const std::string& relation) const;
  size_t num_relations() const { return groups_.size(); }
  size_t num_instances() const;

 private:
  Groups groups_;
  Split split_ = Split::kNone;
};

// FewRel-style JSON: {"<relation>": [{"tokens": [...], "h": [name, id,
// [[i, j, ...], ...]], "t": [...]}, ...], ...}. Only the first mention of
// each entity is kept; its span is [min index, max index]. Throws DataError
// naming the record (relation and index) on malformed or out-of-bounds data.
Corpus LoadFewRel(const std::string& path);
Corpus ParseFewRel(const std::string& text);

// Canonical line-delimited records, one JSON object per line:
// {"id", "tokens", "head_span": [a, b], "tail_span": [a, b], "relation",
// "split"}.
std::string ToCanonicalLine(const SentenceInstance& inst, Split split);
SentenceInstance FromCanonicalLine(const std::string& line, Split* split,
                                   const std::string& where);
void SaveCanonical(const std::string& path, const std::vector<Corpus>& corpora);
// Returns one corpus per split present in the file (ordered train, valid,
// test, none).
std::vector<Corpus> LoadCanonical(const std::string& path);
// Picks the corpus tagged `split` out of LoadCanonical's result.
Corpus LoadCanonicalSplit(const std::string& path, Split split);

struct CorpusSplits {
  Corpus train;
  Corpus valid;
  Corpus test;
};

// Relation-disjoint random split, deterministic in `seed`.
CorpusSplits SplitRelations(const Corpus& corpus, size_t n_train, size_t n_valid,
                            size_t n_test, uint64_t seed);

}  // namespace mpe

#endif  // MPE_CORPUS_H_
