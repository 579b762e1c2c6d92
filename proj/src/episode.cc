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

#include "mpe/episode.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "mpe/error.h"

namespace mpe {

void EpisodeConfig::Validate() const {
  if (n_way < 2) throw UsageError("episode needs N >= 2 classes");
  if (k_shot < 1) throw UsageError("episode needs K >= 1 support instances");
  if (r_query < 1) throw UsageError("episode needs R >= 1 queries");
}

Episode SampleEpisode(const Corpus& corpus, const EpisodeConfig& cfg) {
  cfg.Validate();
  std::vector<std::string> relations = corpus.relations();
  if (relations.size() < cfg.n_way) {
    throw DataError("corpus has " + std::to_string(relations.size()) +
                    " relations, episode needs " + std::to_string(cfg.n_way));
  }
  std::mt19937_64 rng(cfg.seed);
  // Partial Fisher-Yates for the roster.
  for (size_t i = 0; i < cfg.n_way; ++i) {
    std::uniform_int_distribution<size_t> pick(i, relations.size() - 1);
    std::swap(relations[i], relations[pick(rng)]);
  }
  Episode ep;
  ep.roster.assign(relations.begin(), relations.begin() + static_cast<long>(cfg.n_way));

  const bool balanced = cfg.r_query % cfg.n_way == 0;
  const size_t per_class_queries = balanced ? cfg.r_query / cfg.n_way : 1;
  std::vector<std::vector<size_t>> remaining(cfg.n_way);
  for (size_t c = 0; c < cfg.n_way; ++c) {
    const auto& group = corpus.group(ep.roster[c]);
    if (group.size() < cfg.k_shot + per_class_queries) {
      throw DataError("relation '" + ep.roster[c] + "' has " + std::to_string(group.size()) +
                      " instances, episode needs " +
                      std::to_string(cfg.k_shot + per_class_queries));
    }
    std::vector<size_t> order(group.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<SentenceInstance> slots;
    for (size_t k = 0; k < cfg.k_shot; ++k) slots.push_back(group[order[k]]);
    ep.support.push_back(std::move(slots));
    remaining[c].assign(order.begin() + static_cast<long>(cfg.k_shot), order.end());
  }

  auto take_query = [&](size_t c) {
    ep.query.push_back(corpus.group(ep.roster[c])[remaining[c].back()]);
    ep.query_class.push_back(c);
    remaining[c].pop_back();
  };
  if (balanced) {
    for (size_t c = 0; c < cfg.n_way; ++c) {
      for (size_t j = 0; j < per_class_queries; ++j) take_query(c);
    }
    // Interleave so query order does not reveal the class.
    std::vector<size_t> perm(ep.query.size());
    std::iota(perm.begin(), perm.end(), size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<SentenceInstance> q;
    std::vector<size_t> qc;
    for (size_t i : perm) {
      q.push_back(std::move(ep.query[i]));
      qc.push_back(ep.query_class[i]);
    }
    ep.query = std::move(q);
    ep.query_class = std::move(qc);
  } else {
    for (size_t j = 0; j < cfg.r_query; ++j) {
      std::vector<size_t> open;
      for (size_t c = 0; c < cfg.n_way; ++c) {
        if (!remaining[c].empty()) open.push_back(c);
      }
      if (open.empty()) {
        throw DataError("roster relations ran out of query instances (relation '" +
                        ep.roster.front() + "' and peers)");
      }
      take_query(open[std::uniform_int_distribution<size_t>(0, open.size() - 1)(rng)]);
    }
  }
  return ep;
}

void SaveEpisode(const std::string& path, const Episode& episode) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  nlohmann::json header;
  header["roster"] = episode.roster;
  header["n"] = episode.n_way();
  header["k"] = episode.k_shot();
  header["r"] = episode.query.size();
  out << header.dump() << '\n';
  auto write = [&](const SentenceInstance& inst, const char* role) {
    auto j = nlohmann::json::parse(ToCanonicalLine(inst, Split::kNone));
    j["episode_role"] = role;
    out << j.dump() << '\n';
  };
  for (const auto& cls : episode.support) {
    for (const auto& inst : cls) write(inst, "support");
  }
  for (const auto& inst : episode.query) write(inst, "query");
  if (!out) throw DataError("failed writing " + path);
}

Episode LoadEpisode(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": missing roster header");
  Episode ep;
  try {
    auto header = nlohmann::json::parse(line);
    ep.roster = header.at("roster").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(path + ": malformed roster header");
  }
  ep.support.resize(ep.roster.size());
  auto class_of = [&](const std::string& rel, const std::string& where) {
    auto it = std::find(ep.roster.begin(), ep.roster.end(), rel);
    if (it == ep.roster.end()) throw DataError(where + ": relation '" + rel + "' not in roster");
    return static_cast<size_t>(it - ep.roster.begin());
  };
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    SentenceInstance inst = FromCanonicalLine(line, nullptr, where);
    std::string role;
    try {
      role = nlohmann::json::parse(line).value("episode_role", std::string());
    } catch (const nlohmann::json::exception&) {
      throw DataError(where + ": bad episode_role");
    }
    const size_t c = class_of(inst.relation, where);
    if (role == "support") {
      ep.support[c].push_back(std::move(inst));
    } else if (role == "query") {
      ep.query.push_back(std::move(inst));
      ep.query_class.push_back(c);
    } else {
      throw DataError(where + ": episode_role must be support or query");
    }
  }
  return ep;
}

}  // namespace mpe
