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

#include "promptlab/adaptation.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

namespace promptlab {

std::string NoiseBiasVector::to_json() const {
  nlohmann::ordered_json j = {{"method", method}, {"scale", scale}, {"sources", sources}, {"v", v}};
  return j.dump(2) + "\n";
}

NoiseBiasVector bias_from_pooled(const std::vector<std::vector<double>>& pooled,
                                 std::vector<std::string> sources, bool raw) {
  if (pooled.empty()) throw ContractError("noise bias: no pooled vectors");
  const auto d = pooled.front().size();
  if (d == 0) throw ContractError("noise bias: empty pooled vector");
  NoiseBiasVector out;
  out.v.assign(d, 0.0);
  for (const auto& p : pooled) {
    if (p.size() != d) throw DimensionError("noise bias: pooled vectors differ in width");
    for (std::size_t j = 0; j < d; ++j) out.v[j] += p[j];
  }
  for (auto& x : out.v) x /= static_cast<double>(pooled.size());
  out.sources = std::move(sources);
  out.method = raw ? "raw" : "rms";
  if (!raw) {
    double ms = 0.0;
    for (double x : out.v) ms += x * x;
    const double rms = std::sqrt(ms / static_cast<double>(d));
    if (!(rms > 0.0)) throw ContractError("noise bias: pooled average has zero RMS");
    out.scale = rms;
    for (auto& x : out.v) x /= rms;
  }
  return out;
}

NoiseBiasVector extract_noise_bias(const EncoderModel& encoder, const PromptMatrix& prompts,
                                   std::span<const NoiseClip> clips, const BiasOptions& options) {
  if (clips.empty() || options.n_samples == 0) throw ContractError("noise bias: empty clip set");
  if (options.n_samples > clips.size()) {
    throw ContractError("noise bias: requested " + std::to_string(options.n_samples) + " clips, only " +
                        std::to_string(clips.size()) + " available");
  }
  NoGradScope no_grad;
  const PromptMatrix none(prompts.dim());
  std::vector<std::vector<double>> pooled;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < options.n_samples; ++i) {
    const auto& clip = clips[i];
    Tensor frames = clip.frames;
    if (frames.rows() == 0) throw ContractError("noise bias: clip " + clip.id() + " has no frames");
    if (options.max_frames > 0 && frames.rows() > options.max_frames) {
      frames = slice_rows(frames, 0, options.max_frames);
    }
    const auto out = forward(encoder, frames, options.with_prompts ? prompts : none);
    pooled.push_back(pool_output(out, false));
    ids.push_back(clip.id());
  }
  return bias_from_pooled(pooled, std::move(ids), options.raw);
}

PromptMatrix shift_noise_prompts(const PromptMatrix& prompts, const PromptPartition& partition,
                                 std::span<const double> v) {
  const auto m = prompts.count();
  partition.validate(m);
  if (v.size() != prompts.dim()) {
    throw ContractError("shift: bias width " + std::to_string(v.size()) + " differs from prompt width " +
                        std::to_string(prompts.dim()));
  }
  if (m == 0) return PromptMatrix(prompts.dim());
  const auto d = prompts.dim();
  const auto src = prompts.values().data();
  std::vector<double> out(src.begin(), src.end());
  for (auto r : partition.set2_noise) {
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = round_to_precision(src[r * d + c] * v[c]);
  }
  return PromptMatrix(Tensor({m, d}, std::move(out)));
}

WerTable zero_shot_adapt_eval(const EncoderModel& encoder, const PromptMatrix& prompts,
                              const DecoderHead& head, const DecoderHead& baseline_head,
                              const PromptPartition& partition, const NoiseBiasVector& bias,
                              std::span<const EvalSet> sets) {
  NoGradScope no_grad;
  WerTable out = eval_arm(encoder, PromptMatrix(prompts.dim()), baseline_head, "baseline", sets);
  const auto vanilla = eval_arm(encoder, prompts, head, "vanilla", sets);
  const auto shifted = eval_arm(encoder, shift_noise_prompts(prompts, partition, bias.v), head, "shifted", sets);
  out.insert(out.end(), vanilla.begin(), vanilla.end());
  out.insert(out.end(), shifted.begin(), shifted.end());
  return out;
}

}  // namespace promptlab
