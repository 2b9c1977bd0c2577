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

// Two training stages: supervised CTC pretraining of the backbone on clean
// features, and prompt tuning (prompts + decoder head) against a frozen
// backbone on the noisy training split.

#ifndef PROMPTLAB_TRAINING_HPP_
#define PROMPTLAB_TRAINING_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptlab/config.hpp"
#include "promptlab/ctc.hpp"
#include "promptlab/encoder.hpp"
#include "promptlab/synth.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

struct CurvePoint {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;  // before clipping
};

struct EvalPoint {
  std::size_t step = 0;
  std::string split;
  double wer = 0.0;
};

struct RunRecord {
  std::string stage;  // "pretrain" or "prompt-tune"
  std::string optimizer;
  std::uint64_t seed = 0;
  std::size_t prompts = 0;
  std::string config_text;
  std::vector<CurvePoint> curve;
  std::vector<EvalPoint> evals;
  std::string checkpoint;  // path of the saved checkpoint, if any
  std::string encoder_hash_before;
  std::string encoder_hash_after;

  /// One JSON object per line: a header record, then "step" and "eval"
  /// records in order.
  std::string to_jsonl() const;
};

class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, std::size_t step, std::vector<CurvePoint> curve)
      : std::runtime_error(what), step_(step), curve_(std::move(curve)) {}
  std::size_t step() const { return step_; }
  const std::vector<CurvePoint>& curve() const { return curve_; }

 private:
  std::size_t step_;
  std::vector<CurvePoint> curve_;
};

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" or "momentum"
  double lr = 1e-4;
  std::size_t warmup = 0;     // linear warmup steps
  double grad_clip = 0.0;     // global-norm clip; 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
};

/// First-order optimizer over a fixed list of trainable tensors.
class Optimizer {
 public:
  /// Throws ContractError if any parameter is not trainable.
  Optimizer(OptimizerConfig config, std::vector<Tensor> params);

  /// Applies one update from grads (missing entries count as zero) and
  /// returns the pre-clip global gradient norm. Throws ContractError when
  /// gradients are disabled on this thread or a parameter has been frozen.
  double step(const GradientMap& grads);

  std::size_t steps() const { return t_; }
  double current_lr() const;
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Mean CTC loss over a batch and its gradient (averaged), one tape per
/// utterance summed in batch order. use_clean selects clean features.
double batch_gradient(const EncoderModel& encoder, const PromptMatrix& prompts,
                      const DecoderHead& head, std::span<const Utterance* const> batch,
                      bool use_clean, GradientMap& grads);

struct EvalStats {
  ErrorCounts errors;
  double mean_loss = 0.0;  // mean CTC loss per utterance
};

/// Greedy-decoding errors and mean CTC loss in one pass, without a tape.
EvalStats evaluate_stats(const EncoderModel& encoder, const PromptMatrix& prompts,
                         const DecoderHead& head, std::span<const Utterance> utterances,
                         bool use_clean = false);

/// Corpus WER of greedy decoding on the mixed features (clean features when
/// use_clean). Runs without a tape.
ErrorCounts evaluate_errors(const EncoderModel& encoder, const PromptMatrix& prompts,
                            const DecoderHead& head, std::span<const Utterance> utterances,
                            bool use_clean = false);
double evaluate_wer(const EncoderModel& encoder, const PromptMatrix& prompts,
                    const DecoderHead& head, std::span<const Utterance> utterances,
                    bool use_clean = false);

struct PretrainResult {
  EncoderModel encoder;  // frozen
  RunRecord record;
  double dev_clean_wer = 0.0;
};

/// Trains encoder and a throwaway head with CTC on the clean training
/// features, then freezes the encoder. Throws TrainingFailure if dev-clean
/// WER ends above cfg.pretrain_wer_threshold.
PretrainResult pretrain_backbone(const Corpus& corpus, const ExperimentConfig& cfg);

struct TuneOptions {
  std::size_t prompts = 20;
  std::size_t vocab = 12;
  double lr = 1e-4;
  std::size_t steps = 10000;
  std::size_t batch = 8;
  std::size_t warmup = 800;
  std::string optimizer = "adam";
  double grad_clip = 5.0;
  std::size_t head_layers = 1;
  std::size_t eval_interval = 500;
  std::size_t eval_subset = 200;
  std::size_t init_stats_utterances = 200;
  std::uint64_t seed = 0;
};

TuneOptions tune_options(const ExperimentConfig& cfg, std::size_t prompts, std::uint64_t seed);

struct TuneResult {
  PromptMatrix prompts;  // m == 0 for the baseline arm
  DecoderHead head;
  RunRecord record;
};

/// Per-dimension standard deviation of embedding outputs over the first n
/// training utterances (clean features).
std::vector<double> embedding_std(const EncoderModel& encoder, std::span<const Utterance> utterances,
                                  std::size_t n);

/// Trains prompts (m = options.prompts, possibly 0) and a fresh decoder head
/// on the noisy training split. The encoder must be frozen.
TuneResult prompt_tune(const EncoderModel& encoder, const Corpus& corpus, const TuneOptions& options);

struct GridResult {
  double best_lr = 0.0;
  std::vector<std::pair<double, double>> dev_clean_wer;  // (lr, WER) per candidate
};

/// Tunes one arm per candidate and picks the lowest dev-clean WER; ties go to
/// the smaller learning rate. A single candidate is returned without training.
GridResult grid_search_lr(const EncoderModel& encoder, const Corpus& corpus,
                          std::vector<double> candidates, const TuneOptions& options);

}  // namespace promptlab

#endif  // PROMPTLAB_TRAINING_HPP_
