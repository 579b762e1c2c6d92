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

#include "mpe/tags.h"

#include "mpe/error.h"

namespace mpe {

const char* TagName(Tag t) {
  switch (t) {
    case Tag::kO: return "O";
    case Tag::kBHead: return "B-Head";
    case Tag::kIHead: return "I-Head";
    case Tag::kBTail: return "B-Tail";
    case Tag::kITail: return "I-Tail";
    case Tag::kX: return "X";
    case Tag::kStart: return "<s>";
    case Tag::kEnd: return "</s>";
  }
  return "?";
}

Tag TagFromIndex(size_t i) {
  if (i >= kNumTags) throw DataError("tag index " + std::to_string(i) + " out of range");
  return static_cast<Tag>(i);
}

SubtokenMap::SubtokenMap(std::vector<std::vector<size_t>> word_to_subtokens)
    : words_(std::move(word_to_subtokens)) {
  size_t next = 0;
  for (size_t w = 0; w < words_.size(); ++w) {
    if (words_[w].empty()) {
      throw DataError("subtoken map: word " + std::to_string(w) + " has no subtokens");
    }
    for (size_t k = 0; k < words_[w].size(); ++k) {
      if (words_[w][k] != next) {
        throw DataError("subtoken map: word " + std::to_string(w) +
                        " is not contiguous with its predecessor");
      }
      word_of_.emplace_back(w, k == 0);
      ++next;
    }
  }
  total_ = next;
}

SubtokenMap SubtokenMap::Identity(size_t words) {
  std::vector<std::vector<size_t>> m(words);
  for (size_t i = 0; i < words; ++i) m[i] = {i};
  return SubtokenMap(std::move(m));
}

std::string TagsToString(const TagSequence& tags) {
  std::string s;
  for (size_t i = 0; i < tags.size(); ++i) {
    if (i > 0) s += ' ';
    s += TagName(tags[i]);
  }
  return s;
}

TagSequence ToTagSequence(const SentenceInstance& inst, const SubtokenMap& sub) {
  if (sub.num_words() != inst.tokens.size()) {
    throw DataError(inst.id + ": subtoken map covers " + std::to_string(sub.num_words()) +
                    " words, sentence has " + std::to_string(inst.tokens.size()));
  }
  if (inst.head.Overlaps(inst.tail)) throw DataError(inst.id + ": head and tail spans overlap");
  TagSequence tags(sub.num_subtokens() + 2, Tag::kO);
  tags.front() = Tag::kStart;
  tags.back() = Tag::kEnd;
  for (size_t w = 0; w < sub.num_words(); ++w) {
    Tag first = Tag::kO;
    if (inst.head.Contains(w)) first = w == inst.head.first ? Tag::kBHead : Tag::kIHead;
    if (inst.tail.Contains(w)) first = w == inst.tail.first ? Tag::kBTail : Tag::kITail;
    const auto& pieces = sub.subtokens(w);
    tags[pieces[0] + 1] = first;
    for (size_t k = 1; k < pieces.size(); ++k) tags[pieces[k] + 1] = Tag::kX;
  }
  return tags;
}

DecodedSpans SpansFromTags(const TagSequence& tags, const SubtokenMap& sub) {
  if (tags.size() != sub.num_subtokens() + 2) {
    throw DataError("tag sequence length " + std::to_string(tags.size()) +
                    " does not match " + std::to_string(sub.num_subtokens()) + " subtokens");
  }
  DecodedSpans out;
  auto word_tag = [&](size_t w) { return tags[sub.first_subtoken(w) + 1]; };
  auto read = [&](Tag begin, Tag inside) -> std::optional<Span> {
    for (size_t w = 0; w < sub.num_words(); ++w) {
      if (word_tag(w) != begin) continue;
      size_t last = w;
      while (last + 1 < sub.num_words() && word_tag(last + 1) == inside) ++last;
      return Span{w, last};
    }
    return std::nullopt;
  };
  out.head = read(Tag::kBHead, Tag::kIHead);
  out.tail = read(Tag::kBTail, Tag::kITail);
  return out;
}

std::string CheckTagSequence(const TagSequence& tags, const SubtokenMap& sub) {
  const size_t n = sub.num_subtokens();
  if (tags.size() != n + 2) return "length " + std::to_string(tags.size()) + " != n + 2";
  if (tags.front() != Tag::kStart) return "position 0 is not the start label";
  if (tags.back() != Tag::kEnd) return "last position is not the end label";
  size_t b_head = 0, b_tail = 0;
  Tag run = Tag::kO;  // kBHead / kBTail while inside a head / tail run
  for (size_t i = 1; i <= n; ++i) {
    const Tag t = tags[i];
    const bool word_start = sub.IsWordStart(i - 1);
    const std::string at = " at position " + std::to_string(i);
    switch (t) {
      case Tag::kStart:
      case Tag::kEnd:
        return std::string("boundary label") + at;
      case Tag::kX:
        if (word_start) return "X on a word-initial subtoken" + at;
        break;
      case Tag::kBHead:
        ++b_head;
        run = Tag::kBHead;
        break;
      case Tag::kBTail:
        ++b_tail;
        run = Tag::kBTail;
        break;
      case Tag::kIHead:
        if (run != Tag::kBHead) return "I-Head outside a head run" + at;
        break;
      case Tag::kITail:
        if (run != Tag::kBTail) return "I-Tail outside a tail run" + at;
        break;
      case Tag::kO:
        run = Tag::kO;
        break;
    }
  }
  if (b_head != 1) return std::to_string(b_head) + " B-Head labels";
  if (b_tail != 1) return std::to_string(b_tail) + " B-Tail labels";
  return {};
}

}  // namespace mpe
