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

#ifndef MPE_CONFIG_H_
#define MPE_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mpe/evaluate.h"
#include "mpe/model.h"
#include "mpe/synthetic.h"
#include "mpe/train.h"

namespace mpe {

// "key = value" lines grouped under "[section]" headers. Blank lines and
// lines starting with '#' or ';' are ignored.
class IniFile {
 public:
  struct Entry {
    std::string section;
    std::string key;
    std::string value;
    std::string where;  // "file:line" for messages
  };

  // Throws UsageError on a malformed line.
  static IniFile Parse(const std::string& text, const std::string& origin);
  static IniFile Load(const std::string& path);

  void Add(Entry e) { entries_.push_back(std::move(e)); }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Where the corpus comes from. With an empty `corpus` a synthetic corpus is
// generated from the [synth] section and split by relation.
struct DataConfig {
  std::string corpus;      // canonical JSONL with train/valid/test splits
  std::string embeddings;  // precomputed embeddings; empty trains the encoder
  size_t train_relations = 10;
  size_t valid_relations = 5;
  size_t test_relations = 5;
};

struct RunConfig {
  uint64_t seed = 1;  // model init and training
  DataConfig data;
  uint64_t synth_seed = 1;  // corpus generation and relation split
  SynthConfig synth;
  ModelConfig model = DeskModelConfig();
  TrainConfig train = DeskTrainConfig();
  EvalSettings eval;
  Split eval_split = Split::kTest;
};

// Applies every entry of `ini` on top of `cfg`. Unknown sections or keys
// and unparsable values throw UsageError naming the line.
void ApplyIni(RunConfig& cfg, const IniFile& ini);
RunConfig LoadRunConfig(const std::string& path);

// Renders the full config; ApplyIni over the result reproduces it.
std::string RenderRunConfig(const RunConfig& cfg);

// The [model] and [loss] sections alone, as stored in checkpoints.
std::string RenderModelConfig(const ModelConfig& cfg);
ModelConfig ParseModelConfig(const IniFile& ini);

}  // namespace mpe

#endif  // MPE_CONFIG_H_
