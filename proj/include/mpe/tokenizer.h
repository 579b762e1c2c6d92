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

#ifndef MPE_TOKENIZER_H_
#define MPE_TOKENIZER_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpe/corpus.h"
#include "mpe/tags.h"

namespace mpe {

// Whitespace-word tokenizer with a character fallback: a word in the
// vocabulary is one subtoken; any other word is split into UTF-8 characters,
// the first as "c" and the rest as continuation pieces "##c". Characters
// missing from the vocabulary map to [UNK].
class Tokenizer {
 public:
  static constexpr int32_t kCls = 0;
  static constexpr int32_t kSep = 1;
  static constexpr int32_t kUnk = 2;

  struct Encoded {
    std::vector<int32_t> ids;  // subtokens, without the boundary tokens
    SubtokenMap map;
  };

  // Keeps words seen at least `min_count` times plus every character piece
  // in the corpora. Deterministic: pieces are sorted.
  static Tokenizer Build(std::span<const Corpus* const> corpora, size_t min_count = 2);
  // Specials are prepended when missing.
  static Tokenizer FromVocabulary(std::vector<std::string> pieces);

  Encoded Encode(std::span<const std::string> words) const;

  size_t size() const { return pieces_.size(); }
  const std::string& piece(int32_t id) const { return pieces_.at(static_cast<size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  bool Contains(const std::string& piece) const { return index_.count(piece) > 0; }

  // One piece per line.
  void Save(const std::string& path) const;
  static Tokenizer Load(const std::string& path);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int32_t> index_;
};

// Splits a UTF-8 string into code-point substrings (invalid bytes become
// single-byte pieces).
std::vector<std::string> Utf8Chars(const std::string& word);

}  // namespace mpe

#endif  // MPE_TOKENIZER_H_
