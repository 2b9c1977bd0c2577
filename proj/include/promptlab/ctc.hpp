// Copyright 2026 The promptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// CTC recognizer head: linear projection to token logits, CTC loss,
// greedy decoding and word error rate. The blank symbol is the last logit
// column (index V).

#ifndef PROMPTLAB_CTC_HPP_
#define PROMPTLAB_CTC_HPP_

#include <cstdint>
#include <vector>

#include "promptlab/encoder.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

using TokenSequence = std::vector<int>;

class InfeasibleTargetError : public ContractError {
 public:
  using ContractError::ContractError;
};

class DecoderHead {
 public:
  DecoderHead() = default;
  /// layers is 1 (linear) or 2 (linear-GELU-linear, hidden width d).
  DecoderHead(std::size_t d_model, std::size_t vocab, std::size_t layers, std::uint64_t seed);

  std::size_t vocab() const { return vocab_; }
  std::size_t blank() const { return vocab_; }
  std::size_t layers() const { return layers_; }
  std::size_t d_model() const { return d_model_; }

  /// frames (T x d) -> logits (T x (V+1)).
  Tensor logits(const Tensor& frames) const;

  std::vector<NamedTensor> named_tensors() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void set_trainable(bool on);
  DecoderHead clone() const;

  static DecoderHead from_tensors(std::size_t d_model, std::size_t vocab, std::size_t layers,
                                  const std::vector<NamedTensor>& tensors);

 private:
  std::size_t d_model_ = 0, vocab_ = 0, layers_ = 1;
  Tensor w_out_, b_out_;
  Tensor w_hidden_, b_hidden_;
};

/// Frames needed to emit target: its length plus one blank per adjacent repeat.
std::size_t ctc_min_frames(const TokenSequence& target);

/// log p(target | logits) by the forward recursion in log space. No tape.
double ctc_log_likelihood(const Tensor& logits, const TokenSequence& target);

/// -log p(target | logits) as a taped scalar, differentiable w.r.t. logits.
/// Throws InfeasibleTargetError when T < ctc_min_frames(target).
Tensor ctc_loss(const Tensor& logits, const TokenSequence& target);

/// Per-frame argmax, repeats collapsed, blanks dropped.
TokenSequence greedy_decode(const Tensor& logits);

/// Levenshtein distance with unit costs.
std::size_t edit_distance(const TokenSequence& ref, const TokenSequence& hyp);

/// edit_distance / |ref|. Throws ContractError on an empty reference.
double wer(const TokenSequence& ref, const TokenSequence& hyp);

/// Corpus-level accumulator: total edits over total reference tokens.
struct ErrorCounts {
  std::size_t edits = 0;
  std::size_t ref_tokens = 0;

  void add(const TokenSequence& ref, const TokenSequence& hyp);
  double rate() const;
};

}  // namespace promptlab

#endif  // PROMPTLAB_CTC_HPP_
