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

#include "mpe/train.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpe/error.h"

namespace mpe {
namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Describe(const LossBundle& b) {
  std::ostringstream ss;
  ss << "crf=" << Num(b.crf) << " entity=" << Num(b.entity) << " relation=" << Num(b.relation)
     << " intra=" << Num(b.intra) << " inter=" << Num(b.inter) << " total=" << Num(b.total);
  return ss.str();
}

bool Finite(const LossBundle& b) {
  return std::isfinite(b.crf) && std::isfinite(b.entity) && std::isfinite(b.relation) &&
         std::isfinite(b.intra) && std::isfinite(b.inter) && std::isfinite(b.total);
}

void Accumulate(LossBundle& sum, const LossBundle& b) {
  sum.crf += b.crf;
  sum.entity += b.entity;
  sum.relation += b.relation;
  sum.intra += b.intra;
  sum.inter += b.inter;
  sum.total += b.total;
}

LossBundle Divide(LossBundle b, size_t n) {
  const double d = static_cast<double>(n);
  b.crf /= d;
  b.entity /= d;
  b.relation /= d;
  b.intra /= d;
  b.inter /= d;
  b.total /= d;
  return b;
}

}  // namespace

void TrainConfig::Validate() const {
  if (!(lr_proto > 0.0) || !(lr_encoder > 0.0)) throw UsageError("learning rates must be > 0");
  if (decay_every == 0) throw UsageError("decay_every must be >= 1");
  if (!(decay_factor > 0.0) || decay_factor > 1.0) {
    throw UsageError("decay_factor must be in (0, 1]");
  }
  if (n_way < 2 || k_shot < 1 || r_query < 1) {
    throw UsageError("training episodes need n_way >= 2, k_shot >= 1, r_query >= 1");
  }
  if (log_every == 0) throw UsageError("log_every must be >= 1");
}

TrainConfig DeskTrainConfig() {
  TrainConfig c;
  c.steps = 3000;
  c.lr_proto = 0.05;
  c.lr_encoder = 0.05;
  return c;
}

double LrAt(size_t step, double init, size_t decay_every, double factor) {
  return init * std::pow(factor, static_cast<double>(step / decay_every));
}

TrainState MakeTrainState(Model& model) {
  TrainState s;
  s.params = model.parameters();
  return s;
}

LossBundle TrainStep(Model& model, TrainState& state, const Episode& episode,
                     const TrainConfig& cfg, std::mt19937_64& rng) {
  Tape tape;
  EpisodeLoss loss = model.Loss(tape, episode, /*training=*/true, rng);
  const LossBundle bundle = loss.Bundle();
  if (!Finite(bundle)) {
    throw NumericError("non-finite loss at step " + std::to_string(state.step) + ": " +
                       Describe(bundle));
  }
  tape.Backward(loss.total);
  const double lr_proto = LrAt(state.step, cfg.lr_proto, cfg.decay_every, cfg.decay_factor);
  const double lr_encoder = LrAt(state.step, cfg.lr_encoder, cfg.decay_every, cfg.decay_factor);
  for (Parameter* p : state.params) {
    if (p->trainable) {
      const double lr = p->group == ParamGroup::kEncoder ? lr_encoder : lr_proto;
      auto v = p->value.values();
      auto g = p->grad.values();
      for (size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
      if (!p->value.AllFinite()) {
        throw NumericError("parameter " + p->name + " became non-finite at step " +
                           std::to_string(state.step) + ": " + Describe(bundle));
      }
    }
    p->ZeroGrad();
  }
  state.running_total =
      state.step == 0 ? bundle.total : 0.98 * state.running_total + 0.02 * bundle.total;
  ++state.step;
  return bundle;
}

std::string LogHeader() {
  return "step,total,crf,entity,relation,intra,inter,val_entity,val_relation,val_triple";
}

std::string FormatLogRow(const LogRow& row) {
  std::string s = std::to_string(row.step);
  for (double v : {row.loss.total, row.loss.crf, row.loss.entity, row.loss.relation,
                   row.loss.intra, row.loss.inter}) {
    s += ',' + Num(v);
  }
  for (double v : {row.val_entity, row.val_relation, row.val_triple}) {
    s += ',';
    if (row.validated) s += Num(v);
  }
  return s;
}

TrainResult RunTraining(Model& model, const TrainConfig& cfg, const Corpus& train,
                        const Corpus* valid, const std::string& log_path,
                        const std::function<void(const LogRow&)>& progress) {
  cfg.Validate();
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw DataError("cannot write metrics log " + log_path);
    log << LogHeader() << '\n';
  }
  TrainResult result;
  TrainState state = MakeTrainState(model);
  std::vector<Tensor> best;
  std::mt19937_64 rng(cfg.seed);
  EpisodeConfig ec;
  ec.n_way = std::min(cfg.n_way, train.num_relations());
  ec.k_shot = cfg.k_shot;
  ec.r_query = cfg.r_query;
  ec.Validate();

  LossBundle window;
  size_t window_steps = 0;
  for (size_t step = 1; step <= cfg.steps; ++step) {
    ec.seed = rng();
    const Episode episode = SampleEpisode(train, ec);
    Accumulate(window, TrainStep(model, state, episode, cfg, rng));
    ++window_steps;
    const bool last = step == cfg.steps;
    const bool validate =
        valid != nullptr && ((cfg.eval_every > 0 && step % cfg.eval_every == 0) || last);
    if (step % cfg.log_every != 0 && !validate && !last) continue;

    LogRow row;
    row.step = step;
    row.loss = Divide(window, window_steps);
    window = LossBundle();
    window_steps = 0;
    if (validate) {
      const EvalResult r = Evaluate(model, *valid, cfg.validation);
      row.validated = true;
      row.val_entity = r.entity.mean;
      row.val_relation = r.relation.mean;
      row.val_triple = r.triple.mean;
      if (row.val_triple > result.best_triple ||
          (row.val_triple == result.best_triple && row.val_relation > result.best_relation)) {
        result.best_triple = row.val_triple;
        result.best_relation = row.val_relation;
        result.best_step = step;
        best.clear();
        for (Parameter* p : state.params) best.push_back(p->value);
      }
    }
    if (log.is_open()) log << FormatLogRow(row) << '\n' << std::flush;
    if (progress) progress(row);
    result.log.push_back(row);
  }
  if (!best.empty()) {
    for (size_t i = 0; i < best.size(); ++i) state.params[i]->value = best[i];
  }
  if (log.is_open() && !log) throw DataError("failed writing metrics log " + log_path);
  return result;
}

}  // namespace mpe
