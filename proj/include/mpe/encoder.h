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

#ifndef MPE_ENCODER_H_
#define MPE_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mpe/autodiff.h"
#include "mpe/corpus.h"
#include "mpe/tags.h"
#include "mpe/tokenizer.h"

namespace mpe {

struct EncoderConfig {
  size_t vocab_size = 0;
  size_t width = 32;
  size_t heads = 4;
  size_t layers = 2;
  size_t ffn_width = 0;  // 0 means 2 * width
  double dropout = 0.2;
  size_t max_positions = 512;
  // Learned per-head attention bias by clamped key-query offset; 0 disables.
  size_t offset_window = 4;

  // Throws UsageError unless width % heads == 0 and dropout is in [0, 1).
  void Validate() const;
};

// A sentence ready for encoding: its id, the subtoken ids (empty for
// precomputed sources) and the word -> subtoken alignment.
struct PreparedSentence {
  std::string id;
  std::vector<int32_t> ids;
  SubtokenMap map;
};

// Contextual embeddings of a batch, stacked. Sentence s of n_s subtokens
// owns rows [offsets[s], offsets[s + 1]), n_s + 2 of them: the sentence-start
// row, one row per subtoken, and the sentence-end row.
struct EncodedBatch {
  Var rows;
  std::vector<size_t> offsets;

  size_t row(size_t sentence, size_t position) const { return offsets[sentence] + position; }
};

// Produces contextual embeddings for prepared sentences. Encode() only reads
// parameters, so evaluation may share one source across threads (each with
// its own tape).
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual size_t width() const = 0;
  virtual PreparedSentence Prepare(const SentenceInstance& inst) const = 0;
  virtual EncodedBatch Encode(Tape& tape, std::span<const PreparedSentence* const> batch,
                              bool training, std::mt19937_64& rng) = 0;
  virtual std::vector<Parameter*> parameters() = 0;
};

// Token + absolute position embeddings followed by pre-norm transformer
// layers (multi-head self-attention and a ReLU feed-forward block, each with
// a residual connection) and a final layer norm. Attention never crosses
// sentence boundaries.
class AttentionEncoder : public EmbeddingSource {
 public:
  AttentionEncoder(Tokenizer tokenizer, EncoderConfig cfg, uint64_t seed);

  size_t width() const override { return cfg_.width; }
  PreparedSentence Prepare(const SentenceInstance& inst) const override;
  // Throws DataError on an id outside the vocabulary or a sentence longer
  // than max_positions - 2 subtokens.
  EncodedBatch Encode(Tape& tape, std::span<const PreparedSentence* const> batch,
                      bool training, std::mt19937_64& rng) override;
  std::vector<Parameter*> parameters() override;

  // Evaluation-mode encoding of one subtoken id sequence: (n + 2) x width.
  Tensor EncodeIds(std::span<const int32_t> ids);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    Parameter ln1_gain, ln1_bias, wq, wk, wv, wo, bo;
    Parameter ln2_gain, ln2_bias, w1, b1, w2, b2;
    Parameter offset_bias;
  };

  Tokenizer tokenizer_;
  EncoderConfig cfg_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  std::vector<std::unique_ptr<Layer>> layers_;
  Parameter final_gain_, final_bias_;
};

// Fixed embeddings produced elsewhere (e.g. by a pretrained encoder), keyed
// by instance id. Each matrix has one row per word plus the two boundary
// rows, so sentences are aligned word-for-word (identity subtoken map).
//
// File format: header line "MPEEMB v1 dim=<d> count=<n>", then n blocks of
// a line "<id> <rows>" followed by rows * d little-endian float64 values.
class PrecomputedEmbeddings : public EmbeddingSource {
 public:
  // Throws DataError when the file's width differs from `expected_width`
  // (0 accepts any width).
  static std::unique_ptr<PrecomputedEmbeddings> Load(const std::string& path,
                                                     size_t expected_width = 0);
  static void Save(const std::string& path, size_t width,
                   const std::map<std::string, Tensor>& matrices);

  explicit PrecomputedEmbeddings(size_t width, std::map<std::string, Tensor> matrices);

  size_t width() const override { return width_; }
  size_t size() const { return matrices_.size(); }
  // Throws DataError naming the id when absent.
  const Tensor& Get(const std::string& id) const;

  PreparedSentence Prepare(const SentenceInstance& inst) const override;
  EncodedBatch Encode(Tape& tape, std::span<const PreparedSentence* const> batch,
                      bool training, std::mt19937_64& rng) override;
  std::vector<Parameter*> parameters() override { return {}; }

 private:
  size_t width_;
  std::map<std::string, Tensor> matrices_;
};

}  // namespace mpe

#endif  // MPE_ENCODER_H_
