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

// mpe: command-line front end for corpus preparation, training, evaluation,
// ablations, prediction dumps and metric plots.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpe/config.h"
#include "mpe/corpus.h"
#include "mpe/error.h"
#include "mpe/evaluate.h"
#include "mpe/pipeline.h"
#include "mpe/plot.h"
#include "mpe/synthetic.h"

namespace {

using namespace mpe;

struct CommonFlags {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> split;
  std::optional<size_t> n;
  std::optional<size_t> k;
  std::optional<size_t> episodes;
};

void AddCommon(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "run config (ini)");
  cmd->add_option("--seed", f.seed, "run seed; overrides the config, MPE_SEED overrides both");
}

void AddEvalFlags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--split", f.split, "train, valid or test");
  cmd->add_option("--n", f.n, "ways per evaluation episode");
  cmd->add_option("--k", f.k, "shots per evaluation episode");
  cmd->add_option("--episodes", f.episodes, "number of evaluation episodes");
}

bool SeedOverridden(const CommonFlags& f) {
  const char* env = std::getenv("MPE_SEED");
  return f.seed.has_value() || (env != nullptr && *env != '\0');
}

RunConfig Resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg = LoadRunConfig(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (const char* env = std::getenv("MPE_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0') throw UsageError(std::string("MPE_SEED is not an integer: ") + env);
    cfg.seed = v;
  }
  if (f.split) cfg.eval_split = ParseSplit(*f.split);
  if (f.n) cfg.eval.n_way = *f.n;
  if (f.k) cfg.eval.k_shot = *f.k;
  if (f.episodes) cfg.eval.episodes = *f.episodes;
  return cfg;
}

void PrintSummary(const RunConfig& cfg, const EvalResult& r) {
  std::printf("# %zu-way %zu-shot, %zu queries, %zu episodes on %s; F1 mean +- stddev over episodes\n",
              cfg.eval.n_way, cfg.eval.k_shot, cfg.eval.r_query, cfg.eval.episodes,
              SplitName(cfg.eval_split));
  for (Level l : {Level::kEntity, Level::kRelation, Level::kTriple}) {
    const LevelSummary& s = r.at(l);
    std::printf("%-8s %.4f +- %.4f  (tp %zu fp %zu fn %zu)\n", LevelName(l), s.mean, s.stddev,
                s.pooled.tp, s.pooled.fp, s.pooled.fn);
  }
}

std::unique_ptr<Model> LoadCheckpoint(const std::string& dir, const RunConfig& cfg) {
  return Model::Load(dir, cfg.data.embeddings);
}

// Without --config, a checkpoint is read with the config it was trained with.
void DefaultToCheckpointConfig(CommonFlags& f, const std::string& checkpoint) {
  const std::string saved = checkpoint + "/config.ini";
  if (f.config.empty() && std::filesystem::exists(saved)) f.config = saved;
}

int Run(int argc, char** argv) {
  CLI::App app{"Multi-prototype embedding for few-shot relational triple extraction"};
  app.require_subcommand(1);
  CommonFlags f;

  auto* prepare = app.add_subcommand("prepare", "FewRel-style JSON -> canonical corpus");
  std::string input, output;
  prepare->add_option("--input", input, "FewRel-style JSON file")->required();
  prepare->add_option("--output", output, "canonical JSONL")->required();
  AddCommon(prepare, f);

  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  synth->add_option("--output", output, "canonical JSONL")->required();
  AddCommon(synth, f);

  auto* train = app.add_subcommand("train", "episodic training");
  std::string checkpoint, log_path;
  train->add_option("--out", checkpoint, "checkpoint directory")->required();
  train->add_option("--log", log_path, "metrics CSV (default <out>/metrics.csv)");
  AddCommon(train, f);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  AddCommon(eval, f);
  AddEvalFlags(eval, f);

  auto* ablate = app.add_subcommand("ablate", "train and evaluate ablation variants");
  std::vector<std::string> variants;
  std::string log_dir;
  ablate->add_option("--out", output, "result table (CSV)")->required();
  ablate->add_option("--variants", variants, "subset of full no_crf no_att no_intra no_inter");
  ablate->add_option("--log-dir", log_dir, "per-variant metrics logs");
  AddCommon(ablate, f);
  AddEvalFlags(ablate, f);

  auto* dump = app.add_subcommand("dump", "per-query predictions for error analysis");
  std::string prototypes;
  dump->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  dump->add_option("--out", output, "predictions JSONL")->required();
  dump->add_option("--prototypes", prototypes, "also write the first episode's prototypes");
  AddCommon(dump, f);
  AddEvalFlags(dump, f);

  auto* plot = app.add_subcommand("plot", "metrics CSV -> SVG curves");
  plot->add_option("--input", input, "metrics CSV")->required();
  plot->add_option("--output", output, "SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (prepare->parsed()) {
    const RunConfig cfg = Resolve(f);
    const Corpus all = LoadFewRel(input);
    const CorpusSplits s = SplitRelations(all, cfg.data.train_relations,
                                          cfg.data.valid_relations, cfg.data.test_relations,
                                          cfg.synth_seed);
    SaveCanonical(output, {s.train, s.valid, s.test});
    std::printf("wrote %zu/%zu/%zu relations to %s\n", s.train.num_relations(),
                s.valid.num_relations(), s.test.num_relations(), output.c_str());
  } else if (synth->parsed()) {
    RunConfig cfg = Resolve(f);
    // Here the seed names the corpus.
    if (SeedOverridden(f)) cfg.synth_seed = cfg.seed;
    cfg.data.corpus.clear();
    const DataSplits d = LoadData(cfg);
    SaveCanonical(output, {d.train, d.valid, d.test});
    std::printf("wrote %zu instances to %s\n",
                d.train.num_instances() + d.valid.num_instances() + d.test.num_instances(),
                output.c_str());
  } else if (train->parsed()) {
    const RunConfig cfg = Resolve(f);
    const DataSplits d = LoadData(cfg);
    std::filesystem::create_directories(checkpoint);
    if (log_path.empty()) log_path = checkpoint + "/metrics.csv";
    {
      std::ofstream out(checkpoint + "/config.ini");
      out << RenderRunConfig(cfg);
    }
    TrainedRun run = TrainFromConfig(cfg, d, log_path, [](const LogRow& row) {
      std::fprintf(stderr, "step %zu loss %.4f", row.step, row.loss.total);
      if (row.validated) {
        std::fprintf(stderr, "  val entity %.3f relation %.3f triple %.3f", row.val_entity,
                     row.val_relation, row.val_triple);
      }
      std::fprintf(stderr, "\n");
    });
    run.model->Save(checkpoint);
    std::printf("saved %s (best validation step %zu)\n", checkpoint.c_str(),
                run.result.best_step);
  } else if (eval->parsed()) {
    DefaultToCheckpointConfig(f, checkpoint);
    const RunConfig cfg = Resolve(f);
    const DataSplits d = LoadData(cfg);
    auto model = LoadCheckpoint(checkpoint, cfg);
    PrintSummary(cfg, Evaluate(*model, d.at(cfg.eval_split), cfg.eval));
  } else if (ablate->parsed()) {
    const RunConfig cfg = Resolve(f);
    const DataSplits d = LoadData(cfg);
    std::vector<AblationVariant> chosen;
    for (const auto& v : variants) chosen.push_back(ParseAblation(v));
    if (chosen.empty()) chosen = AllAblations();
    const auto rows = RunAblations(cfg, d, chosen, log_dir);
    const std::string table = AblationTable(rows);
    std::ofstream out(output);
    if (!out) throw DataError("cannot write " + output);
    out << table;
    std::fputs(table.c_str(), stdout);
  } else if (dump->parsed()) {
    DefaultToCheckpointConfig(f, checkpoint);
    const RunConfig cfg = Resolve(f);
    const DataSplits d = LoadData(cfg);
    auto model = LoadCheckpoint(checkpoint, cfg);
    const Corpus& corpus = d.at(cfg.eval_split);
    DumpPredictions(*model, corpus, cfg.eval, output);
    if (!prototypes.empty()) {
      EpisodeConfig ec{cfg.eval.n_way, cfg.eval.k_shot, cfg.eval.r_query,
                       EpisodeSeed(cfg.eval.seed, 0)};
      DumpPrototypes(*model, SampleEpisode(corpus, ec), prototypes);
    }
  } else if (plot->parsed()) {
    PlotMetrics(input, output);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const mpe::UsageError& e) {
    std::fprintf(stderr, "mpe: usage error: %s\n", e.what());
    return 1;
  } catch (const mpe::DataError& e) {
    std::fprintf(stderr, "mpe: data error: %s\n", e.what());
    return 2;
  } catch (const mpe::NumericError& e) {
    std::fprintf(stderr, "mpe: numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mpe: %s\n", e.what());
    return 2;
  }
}
