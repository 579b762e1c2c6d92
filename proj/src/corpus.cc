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

#include "mpe/corpus.h"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mpe/error.h"

namespace mpe {
namespace {

using json = nlohmann::json;

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// FewRel mentions: [name, kb_id, [[idx, ...], ...]].
Span MentionSpan(const json& mention, const std::string& where, const char* role) {
  if (!mention.is_array() || mention.size() < 3 || !mention[2].is_array() ||
      mention[2].empty() || !mention[2][0].is_array() || mention[2][0].empty()) {
    throw DataError(where + ": malformed '" + role + "' mention");
  }
  const json& first = mention[2][0];
  size_t lo = SIZE_MAX, hi = 0;
  for (const json& idx : first) {
    if (!idx.is_number_integer() || idx.get<long long>() < 0) {
      throw DataError(where + ": non-integer index in '" + role + "' mention");
    }
    const size_t i = idx.get<size_t>();
    lo = std::min(lo, i);
    hi = std::max(hi, i);
  }
  return Span{lo, hi};
}

Span JsonSpan(const json& v, const std::string& where, const char* field) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
      !v[1].is_number_integer() || v[0].get<long long>() < 0 ||
      v[1].get<long long>() < 0) {
    throw DataError(where + ": field '" + field + "' must be [first, last]");
  }
  return Span{v[0].get<size_t>(), v[1].get<size_t>()};
}

}  // namespace

void ValidateInstance(const SentenceInstance& inst, const std::string& where) {
  const size_t n = inst.tokens.size();
  if (n == 0) throw DataError(where + ": empty token list");
  if (inst.relation.empty()) throw DataError(where + ": empty relation label");
  for (const auto& [span, role] : {std::pair{inst.head, "head"}, std::pair{inst.tail, "tail"}}) {
    if (span.first > span.last) {
      throw DataError(where + ": " + role + " span [" + std::to_string(span.first) + "," +
                      std::to_string(span.last) + "] is reversed");
    }
    if (span.last >= n) {
      throw DataError(where + ": " + role + " span [" + std::to_string(span.first) + "," +
                      std::to_string(span.last) + "] exceeds " + std::to_string(n) +
                      " tokens");
    }
  }
  if (inst.head.Overlaps(inst.tail)) throw DataError(where + ": head and tail spans overlap");
}

const char* SplitName(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
    case Split::kNone: break;
  }
  return "none";
}

Split ParseSplit(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid" || name == "val") return Split::kValid;
  if (name == "test") return Split::kTest;
  if (name == "none" || name.empty()) return Split::kNone;
  throw UsageError("unknown split '" + name + "'");
}

Corpus::Corpus(Groups groups, Split split) : groups_(std::move(groups)), split_(split) {
  for (const auto& [rel, insts] : groups_) {
    if (insts.empty()) throw DataError("relation '" + rel + "' has no instances");
    for (const auto& inst : insts) {
      if (inst.relation != rel) {
        throw DataError("instance " + inst.id + " filed under '" + rel + "' has relation '" +
                        inst.relation + "'");
      }
    }
  }
}

std::vector<std::string> Corpus::relations() const {
  std::vector<std::string> out;
  out.reserve(groups_.size());
  for (const auto& [rel, _] : groups_) out.push_back(rel);
  return out;
}

const std::vector<SentenceInstance>& Corpus::group(const std::string& relation) const {
  auto it = groups_.find(relation);
  if (it == groups_.end()) throw DataError("unknown relation '" + relation + "'");
  return it->second;
}

size_t Corpus::num_instances() const {
  size_t n = 0;
  for (const auto& [_, insts] : groups_) n += insts.size();
  return n;
}

Corpus ParseFewRel(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("FewRel file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || doc.empty()) {
    throw DataError("FewRel file must be a non-empty relation-keyed object");
  }
  Corpus::Groups groups;
  size_t global = 0;
  for (const auto& [rel, records] : doc.items()) {
    if (!records.is_array()) throw DataError("relation '" + rel + "': expected a list of records");
    auto& out = groups[rel];
    for (size_t i = 0; i < records.size(); ++i, ++global) {
      const std::string where =
          "record " + std::to_string(global) + " (" + rel + "[" + std::to_string(i) + "])";
      const json& rec = records[i];
      if (!rec.is_object() || !rec.contains("tokens") || !rec["tokens"].is_array() ||
          !rec.contains("h") || !rec.contains("t")) {
        throw DataError(where + ": expected {tokens, h, t}");
      }
      SentenceInstance inst;
      inst.id = rel + "#" + std::to_string(i);
      inst.relation = rel;
      for (const json& tok : rec["tokens"]) {
        if (!tok.is_string()) throw DataError(where + ": non-string token");
        inst.tokens.push_back(tok.get<std::string>());
      }
      inst.head = MentionSpan(rec["h"], where, "h");
      inst.tail = MentionSpan(rec["t"], where, "t");
      ValidateInstance(inst, where);
      out.push_back(std::move(inst));
    }
    if (out.empty()) throw DataError("relation '" + rel + "' has no records");
  }
  return Corpus(std::move(groups));
}

Corpus LoadFewRel(const std::string& path) { return ParseFewRel(ReadFile(path)); }

std::string ToCanonicalLine(const SentenceInstance& inst, Split split) {
  json j;
  j["id"] = inst.id;
  j["tokens"] = inst.tokens;
  j["head_span"] = {inst.head.first, inst.head.last};
  j["tail_span"] = {inst.tail.first, inst.tail.last};
  j["relation"] = inst.relation;
  j["split"] = SplitName(split);
  return j.dump();
}

SentenceInstance FromCanonicalLine(const std::string& line, Split* split,
                                   const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error&) {
    throw DataError(where + ": not a JSON object");
  }
  if (!j.is_object()) throw DataError(where + ": not a JSON object");
  for (const char* key : {"tokens", "head_span", "tail_span", "relation"}) {
    if (!j.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  }
  SentenceInstance inst;
  try {
    inst.tokens = j["tokens"].get<std::vector<std::string>>();
    inst.relation = j["relation"].get<std::string>();
    inst.id = j.value("id", std::string());
    if (split != nullptr) *split = ParseSplit(j.value("split", std::string("none")));
  } catch (const json::exception&) {
    throw DataError(where + ": field has the wrong type");
  } catch (const UsageError& e) {
    throw DataError(where + ": " + e.what());
  }
  inst.head = JsonSpan(j["head_span"], where, "head_span");
  inst.tail = JsonSpan(j["tail_span"], where, "tail_span");
  ValidateInstance(inst, where);
  return inst;
}

void SaveCanonical(const std::string& path, const std::vector<Corpus>& corpora) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const Corpus& c : corpora) {
    for (const auto& [_, insts] : c.groups()) {
      for (const auto& inst : insts) out << ToCanonicalLine(inst, c.split()) << '\n';
    }
  }
  if (!out) throw DataError("failed writing " + path);
}

std::vector<Corpus> LoadCanonical(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::map<Split, Corpus::Groups> by_split;
  std::string line;
  size_t lineno = 0, records = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Split split = Split::kNone;
    SentenceInstance inst =
        FromCanonicalLine(line, &split, path + ":" + std::to_string(lineno));
    auto& group = by_split[split][inst.relation];
    if (inst.id.empty()) inst.id = inst.relation + "#" + std::to_string(group.size());
    group.push_back(std::move(inst));
    ++records;
  }
  if (records == 0) throw DataError(path + ": no records");
  std::vector<Corpus> out;
  for (Split s : {Split::kTrain, Split::kValid, Split::kTest, Split::kNone}) {
    auto it = by_split.find(s);
    if (it != by_split.end()) out.emplace_back(std::move(it->second), s);
  }
  return out;
}

Corpus LoadCanonicalSplit(const std::string& path, Split split) {
  for (Corpus& c : LoadCanonical(path)) {
    if (c.split() == split) return std::move(c);
  }
  throw DataError(path + ": no records for split '" + SplitName(split) + "'");
}

CorpusSplits SplitRelations(const Corpus& corpus, size_t n_train, size_t n_valid,
                            size_t n_test, uint64_t seed) {
  std::vector<std::string> rels = corpus.relations();
  if (n_train + n_valid + n_test > rels.size()) {
    throw DataError("cannot split " + std::to_string(rels.size()) + " relations into " +
                    std::to_string(n_train) + "/" + std::to_string(n_valid) + "/" +
                    std::to_string(n_test));
  }
  std::mt19937_64 rng(seed);
  std::shuffle(rels.begin(), rels.end(), rng);
  auto take = [&](size_t begin, size_t count, Split split) {
    Corpus::Groups g;
    for (size_t i = begin; i < begin + count; ++i) g[rels[i]] = corpus.group(rels[i]);
    return Corpus(std::move(g), split);
  };
  CorpusSplits out;
  out.train = take(0, n_train, Split::kTrain);
  out.valid = take(n_train, n_valid, Split::kValid);
  out.test = take(n_train + n_valid, n_test, Split::kTest);
  return out;
}

}  // namespace mpe
