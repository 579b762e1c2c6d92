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

#ifndef MPE_TRAIN_H_
#define MPE_TRAIN_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mpe/corpus.h"
#include "mpe/evaluate.h"
#include "mpe/model.h"
#include "mpe/proto.h"

namespace mpe {

struct TrainConfig {
  size_t steps = 30000;
  double lr_proto = 0.1;
  double lr_encoder = 5e-4;
  size_t decay_every = 2000;
  double decay_factor = 1.0 / 3.0;
  size_t n_way = 20;  // capped at the relations the training split has
  size_t k_shot = 5;
  size_t r_query = 5;
  uint64_t seed = 1;
  size_t log_every = 50;
  size_t eval_every = 500;  // 0 disables validation
  EvalSettings validation{5, 5, 5, 100, 7, 1};

  // Throws UsageError unless rates are positive and the counts valid.
  void Validate() const;
};

// Desk-scale schedule for the synthetic corpus with the small trainable
// encoder: 3000 steps at larger rates than the pretrained-encoder defaults.
TrainConfig DeskTrainConfig();

// init * factor^floor(step / decay_every).
double LrAt(size_t step, double init, size_t decay_every = 2000, double factor = 1.0 / 3.0);

struct TrainState {
  size_t step = 0;
  std::vector<Parameter*> params;
  double running_total = 0.0;  // exponential moving average of the total loss
};

TrainState MakeTrainState(Model& model);

// One SGD step on one episode: p -= lr_group(step) * grad, gradients zeroed
// afterwards. Throws NumericError listing the loss components when the loss
// or any updated parameter is not finite.
LossBundle TrainStep(Model& model, TrainState& state, const Episode& episode,
                     const TrainConfig& cfg, std::mt19937_64& rng);

struct LogRow {
  size_t step = 0;
  LossBundle loss;  // mean over the steps since the previous row
  bool validated = false;
  double val_entity = 0.0;
  double val_relation = 0.0;
  double val_triple = 0.0;
};

std::string LogHeader();
std::string FormatLogRow(const LogRow& row);

struct TrainResult {
  std::vector<LogRow> log;
  size_t best_step = 0;
  double best_relation = -1.0;
  double best_triple = -1.0;
};

// Trains for cfg.steps episodes sampled from `train`, validating on `valid`
// (when non-null) every eval_every steps and after the last step. The
// parameters with the best validation triple F1 (relation F1 breaks ties)
// are restored at the end. When `log_path` is non-empty the metrics log is
// written there as CSV.
TrainResult RunTraining(Model& model, const TrainConfig& cfg, const Corpus& train,
                        const Corpus* valid, const std::string& log_path = "",
                        const std::function<void(const LogRow&)>& progress = {});

}  // namespace mpe

#endif  // MPE_TRAIN_H_
