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

#include "mpe/encoder.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mpe/error.h"

namespace mpe {
namespace {

Tensor Uniform(size_t rows, size_t cols, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t = Tensor::Matrix(rows, cols);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor Xavier(size_t rows, size_t cols, std::mt19937_64& rng) {
  return Uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), rng);
}

Parameter EncoderParam(std::string name, Tensor value) {
  return Parameter(std::move(name), std::move(value), ParamGroup::kEncoder);
}

}  // namespace

void EncoderConfig::Validate() const {
  if (width == 0 || heads == 0 || width % heads != 0) {
    throw UsageError("encoder width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (layers == 0) throw UsageError("encoder needs at least one layer");
  if (dropout < 0.0 || dropout >= 1.0) throw UsageError("dropout must lie in [0, 1)");
  if (max_positions < 3) throw UsageError("max_positions must be at least 3");
}

AttentionEncoder::AttentionEncoder(Tokenizer tokenizer, EncoderConfig cfg, uint64_t seed)
    : tokenizer_(std::move(tokenizer)),
      cfg_(cfg),
      token_embedding_("encoder.token_embedding", Tensor(), ParamGroup::kEncoder),
      position_embedding_("encoder.position_embedding", Tensor(), ParamGroup::kEncoder),
      final_gain_("encoder.final_ln.gain", Tensor::Matrix(1, cfg.width, 1.0),
                  ParamGroup::kEncoder),
      final_bias_("encoder.final_ln.bias", Tensor::Matrix(1, cfg.width), ParamGroup::kEncoder) {
  cfg_.vocab_size = tokenizer_.size();
  if (cfg_.ffn_width == 0) cfg_.ffn_width = 2 * cfg_.width;
  cfg_.Validate();
  std::mt19937_64 rng(seed);
  const size_t d = cfg_.width, f = cfg_.ffn_width;
  token_embedding_ = EncoderParam("encoder.token_embedding", Uniform(cfg_.vocab_size, d, 1.0, rng));
  position_embedding_ =
      EncoderParam("encoder.position_embedding", Uniform(cfg_.max_positions, d, 0.5, rng));
  for (size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    layers_.push_back(std::make_unique<Layer>(Layer{
        EncoderParam(p + "ln1.gain", Tensor::Matrix(1, d, 1.0)),
        EncoderParam(p + "ln1.bias", Tensor::Matrix(1, d)),
        EncoderParam(p + "wq", Xavier(d, d, rng)),
        EncoderParam(p + "wk", Xavier(d, d, rng)),
        EncoderParam(p + "wv", Xavier(d, d, rng)),
        EncoderParam(p + "wo", Xavier(d, d, rng)),
        EncoderParam(p + "bo", Tensor::Matrix(1, d)),
        EncoderParam(p + "ln2.gain", Tensor::Matrix(1, d, 1.0)),
        EncoderParam(p + "ln2.bias", Tensor::Matrix(1, d)),
        EncoderParam(p + "w1", Xavier(d, f, rng)),
        EncoderParam(p + "b1", Tensor::Matrix(1, f)),
        EncoderParam(p + "w2", Xavier(f, d, rng)),
        EncoderParam(p + "b2", Tensor::Matrix(1, d)),
        EncoderParam(p + "offset_bias", Tensor::Matrix(cfg_.heads, 2 * cfg_.offset_window + 1)),
    }));
  }
}

PreparedSentence AttentionEncoder::Prepare(const SentenceInstance& inst) const {
  Tokenizer::Encoded enc = tokenizer_.Encode(inst.tokens);
  return PreparedSentence{inst.id, std::move(enc.ids), std::move(enc.map)};
}

EncodedBatch AttentionEncoder::Encode(Tape& tape, std::span<const PreparedSentence* const> batch,
                                      bool training, std::mt19937_64& rng) {
  EncodedBatch out;
  std::vector<size_t> token_rows, position_rows;
  out.offsets.push_back(0);
  for (const PreparedSentence* s : batch) {
    const size_t rows = s->ids.size() + 2;
    if (rows > cfg_.max_positions) {
      throw DataError("sentence " + s->id + " has " + std::to_string(s->ids.size()) +
                      " subtokens; encoder supports " + std::to_string(cfg_.max_positions - 2));
    }
    token_rows.push_back(Tokenizer::kCls);
    for (int32_t id : s->ids) {
      if (id < 0 || static_cast<size_t>(id) >= cfg_.vocab_size) {
        throw DataError("sentence " + s->id + ": token id " + std::to_string(id) +
                        " outside vocabulary of " + std::to_string(cfg_.vocab_size));
      }
      token_rows.push_back(static_cast<size_t>(id));
    }
    token_rows.push_back(Tokenizer::kSep);
    for (size_t p = 0; p < rows; ++p) position_rows.push_back(p);
    out.offsets.push_back(out.offsets.back() + rows);
  }
  const double drop = training ? cfg_.dropout : 0.0;
  Var x = Add(GatherRows(tape.Param(token_embedding_), token_rows),
              GatherRows(tape.Param(position_embedding_), position_rows));
  x = Dropout(x, drop, rng);
  for (auto& layer : layers_) {
    Var h = LayerNorm(x, tape.Param(layer->ln1_gain), tape.Param(layer->ln1_bias));
    Var q = MatMul(h, tape.Param(layer->wq));
    Var k = MatMul(h, tape.Param(layer->wk));
    Var v = MatMul(h, tape.Param(layer->wv));
    Var a = SegmentAttention(q, k, v, out.offsets, cfg_.heads,
                             cfg_.offset_window > 0 ? tape.Param(layer->offset_bias) : Var());
    a = AddBias(MatMul(a, tape.Param(layer->wo)), tape.Param(layer->bo));
    x = Add(x, Dropout(a, drop, rng));
    h = LayerNorm(x, tape.Param(layer->ln2_gain), tape.Param(layer->ln2_bias));
    Var f = Relu(AddBias(MatMul(h, tape.Param(layer->w1)), tape.Param(layer->b1)));
    f = AddBias(MatMul(f, tape.Param(layer->w2)), tape.Param(layer->b2));
    x = Add(x, Dropout(f, drop, rng));
  }
  out.rows = LayerNorm(x, tape.Param(final_gain_), tape.Param(final_bias_));
  return out;
}

std::vector<Parameter*> AttentionEncoder::parameters() {
  std::vector<Parameter*> out{&token_embedding_, &position_embedding_};
  for (auto& l : layers_) {
    for (Parameter* p : {&l->ln1_gain, &l->ln1_bias, &l->wq, &l->wk, &l->wv, &l->wo, &l->bo,
                         &l->ln2_gain, &l->ln2_bias, &l->w1, &l->b1, &l->w2, &l->b2}) {
      out.push_back(p);
    }
    if (cfg_.offset_window > 0) out.push_back(&l->offset_bias);
  }
  out.push_back(&final_gain_);
  out.push_back(&final_bias_);
  return out;
}

Tensor AttentionEncoder::EncodeIds(std::span<const int32_t> ids) {
  PreparedSentence s;
  s.id = "<ids>";
  s.ids.assign(ids.begin(), ids.end());
  s.map = SubtokenMap::Identity(ids.size());
  const PreparedSentence* batch[] = {&s};
  Tape tape;
  std::mt19937_64 rng(0);
  return Encode(tape, batch, /*training=*/false, rng).rows.value();
}

// ---------------------------------------------------------------------------

PrecomputedEmbeddings::PrecomputedEmbeddings(size_t width, std::map<std::string, Tensor> matrices)
    : width_(width), matrices_(std::move(matrices)) {
  for (const auto& [id, m] : matrices_) {
    if (m.rank() != 2 || m.cols() != width_ || m.rows() < 2) {
      throw DataError("embedding for " + id + " has shape " + m.ShapeString() +
                      ", expected rows >= 2 and width " + std::to_string(width_));
    }
    if (!m.AllFinite()) throw DataError("embedding for " + id + " has non-finite entries");
  }
}

std::unique_ptr<PrecomputedEmbeddings> PrecomputedEmbeddings::Load(const std::string& path,
                                                                   size_t expected_width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string header;
  std::getline(in, header);
  size_t dim = 0, count = 0;
  char tail = 0;
  if (std::sscanf(header.c_str(), "MPEEMB v1 dim=%zu count=%zu%c", &dim, &count, &tail) != 2 ||
      dim == 0) {
    throw DataError(path + ": bad header '" + header + "'");
  }
  if (expected_width != 0 && dim != expected_width) {
    throw DataError(path + ": embedding width " + std::to_string(dim) +
                    " does not match configured width " + std::to_string(expected_width));
  }
  std::map<std::string, Tensor> matrices;
  for (size_t i = 0; i < count; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": truncated at block " + std::to_string(i));
    std::istringstream ls(line);
    std::string id;
    size_t rows = 0;
    if (!(ls >> id >> rows) || rows < 2) {
      throw DataError(path + ": bad block header '" + line + "'");
    }
    Tensor m = Tensor::Matrix(rows, dim);
    ReadDoublesLE(in, m.values());
    if (!matrices.emplace(id, std::move(m)).second) {
      throw DataError(path + ": duplicate id " + id);
    }
  }
  return std::make_unique<PrecomputedEmbeddings>(dim, std::move(matrices));
}

void PrecomputedEmbeddings::Save(const std::string& path, size_t width,
                                 const std::map<std::string, Tensor>& matrices) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "MPEEMB v1 dim=" << width << " count=" << matrices.size() << '\n';
  for (const auto& [id, m] : matrices) {
    if (m.cols() != width) throw DataError("embedding for " + id + " has the wrong width");
    out << id << ' ' << m.rows() << '\n';
    WriteDoublesLE(out, m.values());
  }
  if (!out) throw DataError("failed writing " + path);
}

const Tensor& PrecomputedEmbeddings::Get(const std::string& id) const {
  auto it = matrices_.find(id);
  if (it == matrices_.end()) throw DataError("no precomputed embedding for id '" + id + "'");
  return it->second;
}

PreparedSentence PrecomputedEmbeddings::Prepare(const SentenceInstance& inst) const {
  const Tensor& m = Get(inst.id);
  if (m.rows() != inst.tokens.size() + 2) {
    throw DataError("precomputed embedding for " + inst.id + " has " + std::to_string(m.rows()) +
                    " rows; sentence needs " + std::to_string(inst.tokens.size() + 2));
  }
  return PreparedSentence{inst.id, {}, SubtokenMap::Identity(inst.tokens.size())};
}

EncodedBatch PrecomputedEmbeddings::Encode(Tape& tape,
                                           std::span<const PreparedSentence* const> batch,
                                           bool /*training*/, std::mt19937_64& /*rng*/) {
  EncodedBatch out;
  out.offsets.push_back(0);
  std::vector<Var> parts;
  for (const PreparedSentence* s : batch) {
    const Tensor& m = Get(s->id);
    parts.push_back(tape.Constant(m));
    out.offsets.push_back(out.offsets.back() + m.rows());
  }
  out.rows = StackRows(parts);
  return out;
}

}  // namespace mpe
