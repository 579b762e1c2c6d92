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

#ifndef MPE_TAGS_H_
#define MPE_TAGS_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mpe/corpus.h"

namespace mpe {

// Entity tag scheme plus the two boundary labels. The numeric values are the
// CRF label indices.
enum class Tag : uint8_t {
  kO = 0,
  kBHead = 1,
  kIHead = 2,
  kBTail = 3,
  kITail = 4,
  kX = 5,
  kStart = 6,
  kEnd = 7,
};
inline constexpr size_t kNumTags = 8;
// Labels a non-boundary position may take.
inline constexpr size_t kNumInnerTags = 6;

const char* TagName(Tag t);
inline size_t TagIndex(Tag t) { return static_cast<size_t>(t); }
Tag TagFromIndex(size_t i);

// Word index -> contiguous subtoken indices. Subtoken i of the sentence sits
// at row i + 1 of a contextual embedding (row 0 is the sentence start).
class SubtokenMap {
 public:
  SubtokenMap() = default;
  // Throws DataError unless the lists are non-empty and partition
  // 0..total-1 in order.
  explicit SubtokenMap(std::vector<std::vector<size_t>> word_to_subtokens);
  static SubtokenMap Identity(size_t words);

  size_t num_words() const { return words_.size(); }
  size_t num_subtokens() const { return total_; }
  const std::vector<size_t>& subtokens(size_t word) const { return words_.at(word); }
  size_t first_subtoken(size_t word) const { return words_.at(word).front(); }
  // True when subtoken i starts a word.
  bool IsWordStart(size_t subtoken) const { return word_of_[subtoken].second; }
  size_t WordOf(size_t subtoken) const { return word_of_[subtoken].first; }

 private:
  std::vector<std::vector<size_t>> words_;
  std::vector<std::pair<size_t, bool>> word_of_;
  size_t total_ = 0;
};

// Labels over n subtokens plus the start/end boundary positions (n + 2).
using TagSequence = std::vector<Tag>;

std::string TagsToString(const TagSequence& tags);

// Gold labelling. Throws DataError when head and tail overlap or `sub` does
// not cover the sentence.
TagSequence ToTagSequence(const SentenceInstance& inst, const SubtokenMap& sub);

struct DecodedSpans {
  std::optional<Span> head;
  std::optional<Span> tail;
};

// Word-level spans read off the word-start positions: the first B-Head word
// opens the head, which extends over immediately following I-Head words
// (likewise for the tail). Continuation subtokens are ignored.
DecodedSpans SpansFromTags(const TagSequence& tags, const SubtokenMap& sub);

// Empty string when `tags` satisfies every TagSequence invariant, otherwise
// the first violation.
std::string CheckTagSequence(const TagSequence& tags, const SubtokenMap& sub);

}  // namespace mpe

#endif  // MPE_TAGS_H_
