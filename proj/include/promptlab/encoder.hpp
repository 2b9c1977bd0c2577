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

// Pre-norm transformer encoder with soft-prompt injection.
//
// Prompt rows occupy the first m positions of the sequence. They are
// prepended once, after the input embedding and before the first block, and
// their hidden states travel through every block. Sinusoidal position
// encodings are added to frame positions only. The encoder returns the frame
// block (T rows) and the prompt block (m rows) separately; downstream heads
// consume the frame block only.

#ifndef PROMPTLAB_ENCODER_HPP_
#define PROMPTLAB_ENCODER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptlab/tensor.hpp"

namespace promptlab {

struct EncoderConfig {
  std::size_t layers = 4;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t feature_dim = 40;

  std::size_t head_dim() const { return d_model / heads; }
  void validate() const;
};

struct EncoderLayer {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_q, w_k, w_v, w_o;
  Tensor ln2_gamma, ln2_beta;
  Tensor w_ff1, b_ff1, w_ff2, b_ff2;
};

using NamedTensor = std::pair<std::string, Tensor>;

class EncoderModel {
 public:
  EncoderModel() = default;
  /// Randomly initialized, trainable encoder.
  EncoderModel(EncoderConfig config, std::uint64_t seed);

  const EncoderConfig& config() const { return config_; }
  const Tensor& embed_w() const { return embed_w_; }
  const Tensor& embed_b() const { return embed_b_; }
  const std::vector<EncoderLayer>& layers() const { return layers_; }
  const Tensor& final_gamma() const { return final_gamma_; }
  const Tensor& final_beta() const { return final_beta_; }

  /// All weights in a stable order with stable names.
  std::vector<NamedTensor> named_tensors() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;

  /// Marks every weight non-trainable. Irreversible for this instance.
  void freeze();
  bool frozen() const { return frozen_; }

  /// SHA-256 over names, shapes and values of all weights (hex).
  std::string content_hash() const;

  /// Rebuilds a model from named tensors (as produced by named_tensors()).
  static EncoderModel from_tensors(EncoderConfig config, const std::vector<NamedTensor>& tensors,
                                   bool frozen);

 private:
  EncoderConfig config_;
  Tensor embed_w_, embed_b_;
  std::vector<EncoderLayer> layers_;
  Tensor final_gamma_, final_beta_;
  bool frozen_ = false;
};

/// Trainable m x d prompt vectors. m == 0 is the promptless baseline.
class PromptMatrix {
 public:
  PromptMatrix() = default;
  /// Empty (m = 0) prompt matrix of width d.
  explicit PromptMatrix(std::size_t dim) : dim_(dim) {}
  explicit PromptMatrix(Tensor values);

  /// Rows drawn from N(0, stddev^2).
  static PromptMatrix gaussian(std::size_t count, std::size_t dim, double stddev, std::uint64_t seed);

  std::size_t count() const { return values_ ? values_->rows() : 0; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return count() == 0; }
  /// Requires count() > 0.
  const Tensor& values() const;
  Tensor& values();

  void set_trainable(bool on);
  bool trainable() const { return values_ && values_->trainable(); }

  /// New matrix holding only the given rows (0-based), in the given order.
  PromptMatrix select(std::span<const std::size_t> rows) const;
  /// Independent copy.
  PromptMatrix clone() const;

 private:
  std::optional<Tensor> values_;
  std::size_t dim_ = 0;
};

struct LatentOutput {
  Tensor frames;                    // T x d
  std::optional<Tensor> prompts;    // m x d, absent when m == 0
  /// attention[layer][head], (T+m) x (T+m); filled on request.
  std::vector<std::vector<Tensor>> attention;
};

struct ForwardOptions {
  bool keep_attention = false;
};

Tensor sinusoidal_positions(std::size_t count, std::size_t dim);

/// Projects features (T x f) to the model width and adds frame positions.
Tensor embed(const EncoderModel& model, const Tensor& features);

/// [P; X]: rows 0..m-1 are prompts, rows m..m+T-1 are x.
Tensor prepend_prompts(const Tensor& x, const PromptMatrix& prompts);
/// Drops the first m rows.
Tensor strip_prompts(const Tensor& xp, std::size_t m);

/// Multi-head self-attention without residual or normalization:
/// Concat(O_1..O_h) W_O with O_i = softmax(Q_i K_i^T / sqrt(d/h)) V_i.
Tensor multi_head_attention(const Tensor& z, const EncoderLayer& layer, std::size_t heads,
                            std::vector<Tensor>* attention = nullptr);

/// Pre-norm attention sub-block: xp + MHA(LN(xp)).
Tensor attention_layer(const Tensor& xp, const EncoderLayer& layer, std::size_t heads,
                       std::vector<Tensor>* attention = nullptr);

/// Pre-norm feed-forward sub-block: h + W2 gelu(W1 LN(h) + b1) + b2.
Tensor feed_forward_layer(const Tensor& h, const EncoderLayer& layer);

LatentOutput forward(const EncoderModel& model, const Tensor& features, const PromptMatrix& prompts,
                     const ForwardOptions& options = {});

/// Forward with only the active prompt rows (0-based indices), physically
/// removing the others.
LatentOutput forward_masked(const EncoderModel& model, const Tensor& features,
                            const PromptMatrix& prompts, std::span<const std::size_t> active,
                            const ForwardOptions& options = {});

}  // namespace promptlab

#endif  // PROMPTLAB_ENCODER_HPP_
