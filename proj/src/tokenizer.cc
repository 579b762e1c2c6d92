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

#include "mpe/tokenizer.h"

#include <fstream>
#include <map>
#include <set>

#include "mpe/error.h"

namespace mpe {

std::vector<std::string> Utf8Chars(const std::string& word) {
  std::vector<std::string> out;
  size_t i = 0;
  while (i < word.size()) {
    const unsigned char c = static_cast<unsigned char>(word[i]);
    size_t len = 1;
    if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > word.size()) len = 1;
    out.push_back(word.substr(i, len));
    i += len;
  }
  return out;
}

Tokenizer Tokenizer::Build(std::span<const Corpus* const> corpora, size_t min_count) {
  std::map<std::string, size_t> counts;
  std::set<std::string> chars;
  for (const Corpus* c : corpora) {
    for (const auto& [_, insts] : c->groups()) {
      for (const auto& inst : insts) {
        for (const auto& w : inst.tokens) {
          ++counts[w];
          for (const auto& ch : Utf8Chars(w)) chars.insert(ch);
        }
      }
    }
  }
  std::set<std::string> pieces;
  for (const auto& [w, n] : counts) {
    if (n >= min_count) pieces.insert(w);
  }
  for (const auto& ch : chars) {
    pieces.insert(ch);
    pieces.insert("##" + ch);
  }
  return FromVocabulary(std::vector<std::string>(pieces.begin(), pieces.end()));
}

Tokenizer Tokenizer::FromVocabulary(std::vector<std::string> pieces) {
  Tokenizer t;
  t.pieces_ = {"[CLS]", "[SEP]", "[UNK]"};
  for (auto& p : pieces) {
    if (p == "[CLS]" || p == "[SEP]" || p == "[UNK]") continue;
    if (p.empty()) throw DataError("tokenizer: empty vocabulary piece");
    t.pieces_.push_back(std::move(p));
  }
  for (size_t i = 0; i < t.pieces_.size(); ++i) {
    if (!t.index_.emplace(t.pieces_[i], static_cast<int32_t>(i)).second) {
      throw DataError("tokenizer: duplicate piece '" + t.pieces_[i] + "'");
    }
  }
  return t;
}

Tokenizer::Encoded Tokenizer::Encode(std::span<const std::string> words) const {
  Encoded out;
  std::vector<std::vector<size_t>> map;
  map.reserve(words.size());
  for (const auto& w : words) {
    std::vector<size_t> positions;
    auto it = index_.find(w);
    if (it != index_.end()) {
      positions.push_back(out.ids.size());
      out.ids.push_back(it->second);
    } else {
      const auto chars = Utf8Chars(w);
      for (size_t k = 0; k < chars.size(); ++k) {
        auto ct = index_.find(k == 0 ? chars[k] : "##" + chars[k]);
        positions.push_back(out.ids.size());
        out.ids.push_back(ct == index_.end() ? kUnk : ct->second);
      }
      if (chars.empty()) {
        positions.push_back(out.ids.size());
        out.ids.push_back(kUnk);
      }
    }
    map.push_back(std::move(positions));
  }
  out.map = SubtokenMap(std::move(map));
  return out;
}

void Tokenizer::Save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& p : pieces_) out << p << '\n';
  if (!out) throw DataError("failed writing " + path);
}

Tokenizer Tokenizer::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) pieces.push_back(line);
  return FromVocabulary(std::move(pieces));
}

}  // namespace mpe
