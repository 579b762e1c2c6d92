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

#ifndef MPE_PIPELINE_H_
#define MPE_PIPELINE_H_

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mpe/config.h"
#include "mpe/corpus.h"
#include "mpe/evaluate.h"
#include "mpe/model.h"
#include "mpe/train.h"

namespace mpe {

struct DataSplits {
  Corpus train;
  Corpus valid;
  Corpus test;

  const Corpus& at(Split s) const;
};

// Reads the canonical corpus named in the config, or generates and splits
// the synthetic one.
DataSplits LoadData(const RunConfig& cfg);

// Fresh model for a run: a trainable encoder over a vocabulary built from
// the training split, or precomputed embeddings when configured.
std::unique_ptr<Model> BuildModel(const RunConfig& cfg, const DataSplits& data);

struct TrainedRun {
  std::unique_ptr<Model> model;
  TrainResult result;
};

// Builds a model and trains it with the run seed, validating on the valid
// split when it is non-empty.
TrainedRun TrainFromConfig(const RunConfig& cfg, const DataSplits& data,
                           const std::string& log_path = "",
                           const std::function<void(const LogRow&)>& progress = {});

struct AblationRow {
  AblationVariant variant;
  TrainResult train;
  EvalResult eval;
};

// Trains and evaluates each variant from the same seed. Metrics logs go to
// `<log_dir>/<variant>.csv` when log_dir is non-empty.
std::vector<AblationRow> RunAblations(const RunConfig& cfg, const DataSplits& data,
                                      std::span<const AblationVariant> variants,
                                      const std::string& log_dir = "");

// CSV with one row per variant: mean and stddev of entity, relation and
// triple F1.
std::string AblationTable(const std::vector<AblationRow>& rows);

}  // namespace mpe

#endif  // MPE_PIPELINE_H_
