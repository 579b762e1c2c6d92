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

#include "mpe/config.h"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "mpe/error.h"

namespace mpe {
namespace {

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void Bad(const IniFile::Entry& e, const std::string& what) {
  throw UsageError(e.where + ": " + e.section + "." + e.key + ": " + what + " (got '" + e.value +
                   "')");
}

uint64_t ToU64(const IniFile::Entry& e) {
  if (e.value.empty() || e.value.find_first_not_of("0123456789") != std::string::npos) {
    Bad(e, "expected a non-negative integer");
  }
  try {
    return std::stoull(e.value);
  } catch (const std::exception&) {
    Bad(e, "integer out of range");
  }
}

size_t ToSize(const IniFile::Entry& e) { return static_cast<size_t>(ToU64(e)); }

double ToDouble(const IniFile::Entry& e) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(e.value, &used);
  } catch (const std::exception&) {
    Bad(e, "expected a number");
  }
  if (used != e.value.size()) Bad(e, "expected a number");
  return v;
}

bool ToBool(const IniFile::Entry& e) {
  if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
  if (e.value == "false" || e.value == "no" || e.value == "0") return false;
  Bad(e, "expected true or false");
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Bool(bool b) { return b ? "true" : "false"; }

// Wraps a name parser so its UsageError carries the line.
template <typename F>
auto Named(const IniFile::Entry& e, F parse) {
  try {
    return parse(e.value);
  } catch (const UsageError& err) {
    throw UsageError(e.where + ": " + err.what());
  }
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const IniFile::Entry&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MPE_SIZE(sec, name, member)                                               \
  Field{sec, name, [](RunConfig& c, const IniFile::Entry& e) { c.member = ToSize(e); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MPE_U64(sec, name, member)                                               \
  Field{sec, name, [](RunConfig& c, const IniFile::Entry& e) { c.member = ToU64(e); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }}
#define MPE_DOUBLE(sec, name, member)                                               \
  Field{sec, name, [](RunConfig& c, const IniFile::Entry& e) { c.member = ToDouble(e); }, \
        [](const RunConfig& c) { return Num(c.member); }}
#define MPE_BOOL(sec, name, member)                                               \
  Field{sec, name, [](RunConfig& c, const IniFile::Entry& e) { c.member = ToBool(e); }, \
        [](const RunConfig& c) { return Bool(c.member); }}
#define MPE_STRING(sec, name, member)                                               \
  Field{sec, name, [](RunConfig& c, const IniFile::Entry& e) { c.member = e.value; }, \
        [](const RunConfig& c) { return c.member; }}
#define MPE_ENUM(sec, name, member, parse, render)                                  \
  Field{sec, name,                                                                  \
        [](RunConfig& c, const IniFile::Entry& e) { c.member = Named(e, parse); },  \
        [](const RunConfig& c) { return std::string(render(c.member)); }}

const std::vector<Field>& Fields() {
  static const std::vector<Field> fields = {
      MPE_U64("run", "seed", seed),

      MPE_STRING("data", "corpus", data.corpus),
      MPE_STRING("data", "embeddings", data.embeddings),
      MPE_SIZE("data", "train_relations", data.train_relations),
      MPE_SIZE("data", "valid_relations", data.valid_relations),
      MPE_SIZE("data", "test_relations", data.test_relations),

      MPE_U64("synth", "seed", synth_seed),
      MPE_SIZE("synth", "relations", synth.relations),
      MPE_SIZE("synth", "per_relation", synth.per_relation),
      MPE_SIZE("synth", "vocab_size", synth.vocab_size),
      MPE_DOUBLE("synth", "noise", synth.noise),
      MPE_DOUBLE("synth", "type_noise", synth.type_noise),
      MPE_SIZE("synth", "entity_types", synth.entity_types),
      MPE_SIZE("synth", "max_entity_words", synth.max_entity_words),
      MPE_DOUBLE("synth", "rare_name_rate", synth.rare_name_rate),
      MPE_SIZE("synth", "max_filler", synth.max_filler),

      MPE_SIZE("model", "width", model.encoder.width),
      MPE_SIZE("model", "heads", model.encoder.heads),
      MPE_SIZE("model", "layers", model.encoder.layers),
      MPE_SIZE("model", "ffn_width", model.encoder.ffn_width),
      MPE_DOUBLE("model", "dropout", model.encoder.dropout),
      MPE_SIZE("model", "max_positions", model.encoder.max_positions),
      MPE_SIZE("model", "offset_window", model.encoder.offset_window),
      MPE_ENUM("model", "relation_features", model.relation_features, ParseRelationFeatures,
               RelationFeaturesName),
      MPE_BOOL("model", "attention", model.attention),
      MPE_ENUM("model", "tagger", model.tagger, ParseTagger, TaggerName),
      MPE_BOOL("model", "structured_decoding", model.structured_decoding),
      MPE_ENUM("model", "crf_scope", model.crf_scope, ParseCrfScope, CrfScopeName),

      MPE_DOUBLE("loss", "alpha", model.weights.alpha),
      MPE_DOUBLE("loss", "beta", model.weights.beta),
      MPE_DOUBLE("loss", "gamma", model.weights.gamma),
      MPE_DOUBLE("loss", "delta", model.weights.delta),
      MPE_BOOL("loss", "use_intra", model.weights.use_intra),
      MPE_BOOL("loss", "use_inter", model.weights.use_inter),
      MPE_ENUM("loss", "inter_mode", model.inter_mode, ParseInterMode, InterModeName),

      MPE_SIZE("train", "steps", train.steps),
      MPE_DOUBLE("train", "lr_proto", train.lr_proto),
      MPE_DOUBLE("train", "lr_encoder", train.lr_encoder),
      MPE_SIZE("train", "decay_every", train.decay_every),
      MPE_DOUBLE("train", "decay_factor", train.decay_factor),
      MPE_SIZE("train", "n_way", train.n_way),
      MPE_SIZE("train", "k_shot", train.k_shot),
      MPE_SIZE("train", "r_query", train.r_query),
      MPE_SIZE("train", "log_every", train.log_every),
      MPE_SIZE("train", "eval_every", train.eval_every),
      MPE_SIZE("train", "val_n_way", train.validation.n_way),
      MPE_SIZE("train", "val_k_shot", train.validation.k_shot),
      MPE_SIZE("train", "val_r_query", train.validation.r_query),
      MPE_SIZE("train", "val_episodes", train.validation.episodes),
      MPE_U64("train", "val_seed", train.validation.seed),

      MPE_SIZE("eval", "n_way", eval.n_way),
      MPE_SIZE("eval", "k_shot", eval.k_shot),
      MPE_SIZE("eval", "r_query", eval.r_query),
      MPE_SIZE("eval", "episodes", eval.episodes),
      MPE_U64("eval", "seed", eval.seed),
      MPE_SIZE("eval", "threads", eval.threads),
      MPE_ENUM("eval", "split", eval_split, ParseSplit, SplitName),
  };
  return fields;
}

#undef MPE_SIZE
#undef MPE_U64
#undef MPE_DOUBLE
#undef MPE_BOOL
#undef MPE_STRING
#undef MPE_ENUM

const Field* Find(const std::string& section, const std::string& key) {
  for (const Field& f : Fields()) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

std::string Render(const RunConfig& cfg, std::initializer_list<std::string> sections) {
  std::ostringstream out;
  bool first = true;
  for (const std::string& section : sections) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const Field& f : Fields()) {
      if (section == f.section) out << f.key << " = " << f.get(cfg) << '\n';
    }
  }
  return out.str();
}

}  // namespace

IniFile IniFile::Parse(const std::string& text, const std::string& origin) {
  IniFile ini;
  std::istringstream in(text);
  std::string line, section;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw UsageError(where + ": malformed section header");
      section = Trim(t.substr(1, t.size() - 2));
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected 'key = value'");
    if (section.empty()) throw UsageError(where + ": key outside any [section]");
    Entry e{section, Trim(t.substr(0, eq)), Trim(t.substr(eq + 1)), where};
    if (e.key.empty()) throw UsageError(where + ": empty key");
    ini.entries_.push_back(std::move(e));
  }
  return ini;
}

IniFile IniFile::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), path);
}

void ApplyIni(RunConfig& cfg, const IniFile& ini) {
  for (const auto& e : ini.entries()) {
    const Field* f = Find(e.section, e.key);
    if (f == nullptr) throw UsageError(e.where + ": unknown key " + e.section + "." + e.key);
    f->set(cfg, e);
  }
}

RunConfig LoadRunConfig(const std::string& path) {
  RunConfig cfg;
  ApplyIni(cfg, IniFile::Load(path));
  return cfg;
}

std::string RenderRunConfig(const RunConfig& cfg) {
  return Render(cfg, {"run", "data", "synth", "model", "loss", "train", "eval"});
}

std::string RenderModelConfig(const ModelConfig& cfg) {
  RunConfig run;
  run.model = cfg;
  return Render(run, {"model", "loss"});
}

ModelConfig ParseModelConfig(const IniFile& ini) {
  RunConfig run;
  for (const auto& e : ini.entries()) {
    if (e.section != "model" && e.section != "loss") {
      throw DataError(e.where + ": unexpected section [" + e.section + "] in model config");
    }
  }
  ApplyIni(run, ini);
  return run.model;
}

}  // namespace mpe
