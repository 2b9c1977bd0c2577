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

// Zero-shot adaptation to an unseen noise family. A bias vector is pooled
// from the tuned model's latent output on a handful of noise clips, then
// multiplied elementwise into the noise prompts. Nothing is trained.

#ifndef PROMPTLAB_ADAPTATION_HPP_
#define PROMPTLAB_ADAPTATION_HPP_

#include <span>
#include <string>
#include <vector>

#include "promptlab/analysis.hpp"
#include "promptlab/ctc.hpp"
#include "promptlab/encoder.hpp"
#include "promptlab/synth.hpp"

namespace promptlab {

struct NoiseBiasVector {
  std::vector<double> v;
  std::vector<std::string> sources;  // clip ids
  std::string method;                // "rms" or "raw"
  double scale = 1.0;                // v = mean / scale

  std::string to_json() const;
};

/// Averages pooled vectors and, unless raw, divides by the root mean square
/// of the average. Throws ContractError on an empty set or a zero average
/// under RMS normalization.
NoiseBiasVector bias_from_pooled(const std::vector<std::vector<double>>& pooled,
                                 std::vector<std::string> sources, bool raw = false);

struct BiasOptions {
  std::size_t n_samples = 8;
  bool raw = false;
  bool with_prompts = true;
  /// Clips are cropped to their first max_frames frames; 0 keeps them whole.
  std::size_t max_frames = 0;
};

/// Forwards the first n_samples clips (with the tuned prompts unless
/// options.with_prompts is false), mean-pools each frame block over time and
/// combines them with bias_from_pooled.
NoiseBiasVector extract_noise_bias(const EncoderModel& encoder, const PromptMatrix& prompts,
                                   std::span<const NoiseClip> clips, const BiasOptions& options);

/// Rows in set2 become P_k * v elementwise; set1 rows are copied unchanged.
/// The input is not modified.
PromptMatrix shift_noise_prompts(const PromptMatrix& prompts, const PromptPartition& partition,
                                 std::span<const double> v);

/// Arms "baseline" (m = 0 with the baseline head), "vanilla" (tuned prompts)
/// and "shifted" (noise prompts shifted by bias). Runs with gradients
/// disabled.
WerTable zero_shot_adapt_eval(const EncoderModel& encoder, const PromptMatrix& prompts,
                              const DecoderHead& head, const DecoderHead& baseline_head,
                              const PromptPartition& partition, const NoiseBiasVector& bias,
                              std::span<const EvalSet> sets);

}  // namespace promptlab

#endif  // PROMPTLAB_ADAPTATION_HPP_
