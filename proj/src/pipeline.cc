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

#include "mpe/pipeline.h"

#include <cstdio>
#include <filesystem>

#include "mpe/encoder.h"
#include "mpe/error.h"
#include "mpe/synthetic.h"
#include "mpe/tokenizer.h"

namespace mpe {

const Corpus& DataSplits::at(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kValid: return valid;
    case Split::kTest: return test;
    default: break;
  }
  throw UsageError(std::string("no corpus for split '") + SplitName(s) + "'");
}

DataSplits LoadData(const RunConfig& cfg) {
  DataSplits d;
  if (cfg.data.corpus.empty()) {
    const Corpus all = GenerateSynthetic(cfg.synth, cfg.synth_seed);
    CorpusSplits s = SplitRelations(all, cfg.data.train_relations, cfg.data.valid_relations,
                                    cfg.data.test_relations, cfg.synth_seed);
    d.train = std::move(s.train);
    d.valid = std::move(s.valid);
    d.test = std::move(s.test);
    return d;
  }
  for (Corpus& c : LoadCanonical(cfg.data.corpus)) {
    switch (c.split()) {
      case Split::kTrain: d.train = std::move(c); break;
      case Split::kValid: d.valid = std::move(c); break;
      case Split::kTest: d.test = std::move(c); break;
      default: throw DataError(cfg.data.corpus + ": records without a train/valid/test split");
    }
  }
  return d;
}

std::unique_ptr<Model> BuildModel(const RunConfig& cfg, const DataSplits& data) {
  ModelConfig mc = cfg.model;
  std::unique_ptr<EmbeddingSource> source;
  if (cfg.data.embeddings.empty()) {
    if (data.train.num_instances() == 0) throw DataError("training split is empty");
    const Corpus* corpora[] = {&data.train};
    Tokenizer tok = Tokenizer::Build(corpora);
    mc.encoder.vocab_size = tok.size();
    source = std::make_unique<AttentionEncoder>(std::move(tok), mc.encoder, cfg.seed);
  } else {
    source = PrecomputedEmbeddings::Load(cfg.data.embeddings);
    mc.encoder.width = source->width();
  }
  return std::make_unique<Model>(mc, std::move(source), cfg.seed);
}

TrainedRun TrainFromConfig(const RunConfig& cfg, const DataSplits& data,
                           const std::string& log_path,
                           const std::function<void(const LogRow&)>& progress) {
  TrainedRun run;
  run.model = BuildModel(cfg, data);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const Corpus* valid = data.valid.num_instances() > 0 ? &data.valid : nullptr;
  run.result = RunTraining(*run.model, tc, data.train, valid, log_path, progress);
  return run;
}

std::vector<AblationRow> RunAblations(const RunConfig& cfg, const DataSplits& data,
                                      std::span<const AblationVariant> variants,
                                      const std::string& log_dir) {
  if (!log_dir.empty()) std::filesystem::create_directories(log_dir);
  std::vector<AblationRow> rows;
  for (AblationVariant v : variants) {
    RunConfig vc = cfg;
    vc.model = Ablate(cfg.model, v);
    const std::string log =
        log_dir.empty() ? "" : log_dir + "/" + AblationName(v) + ".csv";
    TrainedRun run = TrainFromConfig(vc, data, log);
    AblationRow row{v, std::move(run.result), {}};
    row.eval = Evaluate(*run.model, data.at(cfg.eval_split), cfg.eval);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string AblationTable(const std::vector<AblationRow>& rows) {
  std::string out =
      "variant,entity_f1,entity_std,relation_f1,relation_std,triple_f1,triple_std\n";
  char buf[64];
  for (const auto& r : rows) {
    out += AblationName(r.variant);
    for (const LevelSummary* s : {&r.eval.entity, &r.eval.relation, &r.eval.triple}) {
      std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", s->mean, s->stddev);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace mpe
