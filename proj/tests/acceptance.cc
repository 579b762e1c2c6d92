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

// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,8] [--work DIR]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mpe/config.h"
#include "mpe/crf.h"
#include "mpe/evaluate.h"
#include "mpe/gradcheck.h"
#include "mpe/metrics.h"
#include "mpe/pipeline.h"
#include "mpe/proto.h"
#include "mpe/synthetic.h"
#include "mpe/train.h"
#include "oracles.h"

using namespace mpe;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void Require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string Fmt(const char* fmt, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), fmt, a, b, c);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome CrfOracle() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2026);
  double worst_z = 0.0, worst_v = 0.0;
  size_t path_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + trial % 6;
    const Tensor e = oracle::RandomMatrix(n, 6, rng);
    const Tensor t = oracle::RandomMatrix(6, 6, rng);
    const oracle::CrfEnumeration en = oracle::EnumerateCrf(e, t);
    const ViterbiResult v = Viterbi(e, t);
    worst_z = std::max(worst_z, std::abs(LogPartition(e, t) - en.log_partition));
    worst_v = std::max(worst_v, std::abs(v.score - en.best_score));
    if (v.labels != en.best) ++path_mismatch;
  }
  const double secs = Seconds(start);
  o.Require(worst_z < 1e-8, "log partition off by " + Fmt("%.3g", worst_z));
  o.Require(worst_v < 1e-8, "viterbi score off by " + Fmt("%.3g", worst_v));
  o.Require(path_mismatch == 0, "viterbi path differs");
  o.Require(secs < 5.0, "too slow");
  if (o.pass) o.detail = Fmt("max |dZ| %.2g, max |dV| %.2g, %.2f s", worst_z, worst_v, secs);
  return o;
}

Outcome Gradients() {
  Outcome o;
  RunConfig cfg;
  cfg.synth.relations = 4;
  cfg.synth.per_relation = 10;
  cfg.data.train_relations = 2;
  cfg.data.valid_relations = 1;
  cfg.data.test_relations = 1;
  cfg.model.encoder.width = 8;
  cfg.model.encoder.heads = 2;
  cfg.model.encoder.layers = 1;
  cfg.model.encoder.dropout = 0.0;
  cfg.model.encoder.max_positions = 96;
  const DataSplits data = LoadData(cfg);
  auto model = BuildModel(cfg, data);
  const Episode ep = SampleEpisode(data.train, {2, 2, 2, 3});
  const std::vector<Parameter*> params = model->parameters();
  const char* names[] = {"crf", "entity", "relation", "intra", "inter", "total"};
  std::string summary;
  for (int part = 0; part < 6; ++part) {
    const GradReport r = GradCheck(
        [&](Tape& t) {
          std::mt19937_64 rng(0);
          const EpisodeLoss l = model->Loss(t, ep, false, rng);
          const Var v[] = {l.tagging, l.entity, l.relation, l.intra, l.inter, l.total};
          return v[part];
        },
        params, 1e-5);
    o.Require(r.max_rel_error() < 1e-4, std::string(names[part]) + Fmt(" %.3g", r.max_rel_error()));
    summary += std::string(part ? ", " : "") + names[part] + Fmt(" %.1e", r.max_rel_error());
  }
  if (o.pass) o.detail = summary;
  return o;
}

Outcome PrototypeAlgebra() {
  Outcome o;
  Tape t;
  auto row = [&](std::initializer_list<double> v) { return t.Constant(Tensor::Row(v)); };
  auto drift = [](const Var& a, const Var& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.value().size(); ++i) m = std::max(m, std::abs(a.value()[i] - b.value()[i]));
    return m;
  };
  const std::vector<SpanRep> one = {{row({1, 2}), row({3, 4}), row({5, 6})}};
  o.Require(drift(MeanPrototypes(one).head, one[0].head) == 0.0, "mean K=1");
  o.Require(drift(AttentivePrototypes(one, row({7, 8})).tail, one[0].tail) == 0.0, "attentive K=1");

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<SpanRep> s;
  for (int k = 0; k < 5; ++k) {
    s.push_back({row({g(rng), g(rng), g(rng)}), row({g(rng), g(rng), g(rng)}), row({g(rng), g(rng), g(rng)})});
  }
  const Var q = row({g(rng), g(rng), g(rng)});
  double perm_drift = 0.0;
  std::vector<SpanRep> p = s;
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(p.begin(), p.end(), rng);
    perm_drift = std::max(perm_drift, drift(MeanPrototypes(p).head, MeanPrototypes(s).head));
    perm_drift = std::max(perm_drift, drift(AttentivePrototypes(p, q).sentence, AttentivePrototypes(s, q).sentence));
  }
  o.Require(perm_drift <= 1e-12, "permutation drift " + Fmt("%.3g", perm_drift));

  const std::vector<SpanRep> flat = {{row({1, 0, 0}), row({2, 0, 0}), row({0, 3, 0})},
                                     {row({-4, 0, 0}), row({5, 0, 0}), row({0, -1, 0})}};
  const Var orth = row({0, 0, 1});
  double eq_drift = drift(AttentivePrototypes(flat, orth).head, MeanPrototypes(flat).head);
  eq_drift = std::max(eq_drift, drift(AttentivePrototypes(flat, orth).sentence, MeanPrototypes(flat).sentence));
  o.Require(eq_drift <= 1e-12, "equal energies drift " + Fmt("%.3g", eq_drift));

  const Var id = t.Constant(Tensor::FromRows({{1, 0}, {0, 1}}));
  const Var w = t.Constant(Tensor::FromRows({{1, 2}, {3, 4}}));
  o.Require(drift(KgPrototype(row({3, 1}), row({3, 1}), w), row({0, 0})) == 0.0, "kg zero");
  o.Require(drift(KgPrototype(row({1, 2}), row({1, 0}), id), row({0, 2})) == 0.0, "kg identity");
  o.Require(drift(KgPrototype(row({1, 5}), row({-1, 2}), w), KgPrototype(row({-1, 2}), row({1, 5}), w)) == 0.0,
            "kg symmetry");
  o.Require(drift(KgPrototype(row({1, 5}), row({-1, 2}), t.Constant(Tensor::Matrix(2, 2))), row({0, 0})) == 0.0,
            "kg zero map");
  if (o.pass) o.detail = Fmt("permutation drift %.1e, equal-energy drift %.1e", perm_drift, eq_drift);
  return o;
}

Outcome Regularizers() {
  Outcome o;
  Tape t;
  const Var same = t.Constant(Tensor::FromRows({{1, 0}, {1, 0}}));
  const Var orth = t.Constant(Tensor::FromRows({{1, 0}, {0, 1}}));
  const Var opp = t.Constant(Tensor::FromRows({{1, 0}, {-1, 0}}));
  const double got[] = {InterLoss(same, InterMode::kPaper).scalar(), InterLoss(orth, InterMode::kPaper).scalar(),
                        InterLoss(opp, InterMode::kPaper).scalar(),  InterLoss(same, InterMode::kRepel).scalar(),
                        InterLoss(orth, InterMode::kRepel).scalar(), InterLoss(opp, InterMode::kRepel).scalar()};
  const double want[] = {0.5, 1.0, 1.5, 1.0, 0.5, 0.0};
  for (int i = 0; i < 6; ++i) {
    o.Require(std::abs(got[i] - want[i]) <= 1e-12, Fmt("inter case %.0f: %.17g", i, got[i]));
  }
  const Var protos = t.Constant(Tensor::FromRows({{1, 2}, {-3, 0.5}}));
  const std::vector<std::vector<Var>> at = {{t.Constant(Tensor::Row({1, 2})), t.Constant(Tensor::Row({1, 2}))},
                                            {t.Constant(Tensor::Row({-3, 0.5})), t.Constant(Tensor::Row({-3, 0.5}))}};
  const double intra = IntraLoss(at, protos).scalar();
  o.Require(std::abs(intra) <= 1e-12, "intra at prototypes " + Fmt("%.3g", intra));
  if (o.pass) o.detail = "paper 0.5/1/1.5, repel 1/0.5/0, intra 0";
  return o;
}

Outcome Assembly() {
  Outcome o;
  const double total = AssembleLosses({1, 1, 1, 1, 1, 0}, LossWeights{}).total;
  o.Require(total == 1.0 + 0.5 + 0.8 + (1.0 + 0.75), "total " + Fmt("%.17g", total));
  o.Require(std::abs(total - 4.05) <= 1e-15, "total " + Fmt("%.17g", total));
  if (o.pass) o.detail = Fmt("total %.17g", total);
  return o;
}

Outcome Schedule() {
  Outcome o;
  const double third = 1.0 / 3.0;
  o.Require(LrAt(0, 0.1) == 0.1, "step 0");
  o.Require(LrAt(2000, 0.1) == 0.1 * third, "step 2000");
  o.Require(LrAt(4000, 0.1) == 0.1 * std::pow(third, 2.0), "step 4000");
  if (o.pass) o.detail = Fmt("%.17g, %.17g, %.17g", LrAt(0, 0.1), LrAt(2000, 0.1), LrAt(4000, 0.1));
  return o;
}

Outcome MetricOracle() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::vector<PredictedTriple> preds;
  std::vector<GoldTriple> gold;
  size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    oracle::RandomTriples(rng, 1 + trial % 4, &preds, &gold);
    for (Level l : {Level::kEntity, Level::kRelation, Level::kTriple}) {
      const LevelCounts a = MicroF1(preds, gold, l);
      const LevelCounts b = oracle::SetIntersectionCounts(preds, gold, l);
      if (a.tp != b.tp || a.fp != b.fp || a.fn != b.fn || std::abs(a.f1() - oracle::F1FromCounts(b)) > 1e-12) {
        ++mismatches;
      }
    }
  }
  o.Require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  const std::vector<GoldTriple> g = {{{0, 1}, {4, 4}, "born_in"}};
  std::vector<PredictedTriple> p(1);
  p[0].head = Span{0, 1};
  p[0].tail = Span{4, 4};
  p[0].relation = "capital_of";
  const EpisodeMetrics m = ScoreEpisode("example", p, g);
  o.Require(m.entity.f1() == 1.0 && m.triple.f1() == 0.0, "level example");
  if (o.pass) o.detail = "1000 random cases, level example entity 1 / triple 0";
  return o;
}

Outcome Learning() {
  Outcome o;
  const RunConfig base;
  const Corpus corpus = GenerateSynthetic(base.synth, base.synth_seed);
  const double oracle_acc = oracle::TriggerNearestMeanAccuracy(corpus, "r");
  o.Require(oracle_acc >= 0.85, "trigger oracle " + Fmt("%.3f", oracle_acc));
  const DataSplits data = LoadData(base);
  int passing = 0;
  std::string runs;
  for (uint64_t seed : {1, 2, 3}) {
    RunConfig cfg = base;
    cfg.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    const TrainedRun run = TrainFromConfig(cfg, data);
    const double secs = Seconds(start);
    const bool ok = run.result.best_relation >= 0.90 && run.result.best_triple >= 0.60 && secs < 600.0;
    passing += ok;
    runs += Fmt(" [seed %.0f: relation %.3f", static_cast<double>(seed), run.result.best_relation) +
            Fmt(", triple %.3f, %.0f s]", run.result.best_triple, secs);
    std::fprintf(stderr, "  learning seed %llu: relation %.3f triple %.3f (%.0f s)\n",
                 static_cast<unsigned long long>(seed), run.result.best_relation, run.result.best_triple, secs);
  }
  o.Require(passing >= 2, std::to_string(passing) + "/3 seeds pass");
  o.detail = Fmt("trigger oracle %.3f;", oracle_acc) + runs + (o.pass ? "" : "; " + o.detail);
  return o;
}

Outcome Ablations(const std::string& work) {
  Outcome o;
  RunConfig cfg;
  cfg.eval_split = Split::kTest;
  const DataSplits data = LoadData(cfg);
  const std::vector<AblationVariant> variants = AllAblations();
  const std::vector<AblationRow> rows = RunAblations(cfg, data, variants, work + "/ablation_logs");
  const std::string table = AblationTable(rows);
  std::ofstream(work + "/ablation.csv") << table;
  std::fputs(table.c_str(), stderr);
  o.Require(rows.size() == 5, "variants missing");
  size_t lines = 0;
  for (char c : table) lines += c == '\n';
  o.Require(lines == 6, "table rows");
  double full = 0.0, no_crf = 0.0;
  for (const auto& r : rows) {
    if (r.variant == AblationVariant::kFull) full = r.eval.entity.mean;
    if (r.variant == AblationVariant::kNoCrf) no_crf = r.eval.entity.mean;
  }
  o.Require(no_crf < full, Fmt("no_crf entity %.3f not below full %.3f", no_crf, full));
  if (o.pass) o.detail = Fmt("entity F1 full %.3f, no_crf %.3f", full, no_crf);
  return o;
}

Outcome Determinism(const std::string& work) {
  Outcome o;
  RunConfig cfg;
  cfg.train.steps = 60;
  cfg.train.log_every = 10;
  cfg.train.eval_every = 30;
  cfg.train.validation.episodes = 10;
  const DataSplits data = LoadData(cfg);
  TrainFromConfig(cfg, data, work + "/det_a.csv");
  TrainFromConfig(cfg, data, work + "/det_b.csv");
  const std::string a = ReadFile(work + "/det_a.csv");
  const std::string b = ReadFile(work + "/det_b.csv");
  o.Require(!a.empty(), "empty log");
  o.Require(a == b, "logs differ");
  if (o.pass) o.detail = std::to_string(a.size()) + " identical bytes";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (std::filesystem::temp_directory_path() / "mpe_acceptance").string();
  app.add_option("--only", only, "Criteria to run")->delimiter(',');
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"CRF oracle equivalence", CrfOracle},
      {"gradient correctness", Gradients},
      {"prototype algebra", PrototypeAlgebra},
      {"regularizer values", Regularizers},
      {"loss assembly", Assembly},
      {"learning-rate schedule", Schedule},
      {"metric oracle", MetricOracle},
      {"end-to-end learning", Learning},
      {"ablation harness", [&] { return Ablations(work); }},
      {"determinism", [&] { return Determinism(work); }},
  };
  const std::set<int> chosen(only.begin(), only.end());
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!chosen.empty() && !chosen.count(id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    failed += !o.pass;
    std::printf("criterion %d %s: %s (%s) [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), Seconds(start));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
