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

// Experiment configuration in a key-value text format:
//
//   # comment
//   schema = promptlab-config/1
//   lr = 1e-4
//   lr_grid = 2e-5, 1e-4, 3e-4
//
// Every key is optional except schema; unknown keys and malformed values are
// errors that name the offending field (e.g. "config.lr: expected a number").

#ifndef PROMPTLAB_CONFIG_HPP_
#define PROMPTLAB_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "promptlab/encoder.hpp"
#include "promptlab/synth.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

inline constexpr const char* kConfigSchema = "promptlab-config/1";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::uint64_t corpus_seed = 7;
  Precision precision = Precision::kF32;

  SynthConfig synth;
  EncoderConfig encoder;

  // Backbone pretraining on clean speech.
  double pretrain_lr = 1e-3;
  std::size_t pretrain_steps = 3000;
  std::size_t pretrain_batch = 8;
  std::size_t pretrain_warmup = 200;
  double pretrain_wer_threshold = 0.15;

  // Prompt tuning.
  double lr = 1e-4;
  std::vector<double> lr_grid = {2e-5, 1e-4, 3e-4};
  bool grid_search = false;
  std::size_t steps = 10000;
  std::size_t batch = 8;
  std::size_t warmup = 800;
  std::string optimizer = "adam";
  double grad_clip = 5.0;
  std::size_t prompts = 20;
  std::size_t large_prompts = 50;  // second prompt size for reproduce-all; 0 disables
  std::size_t head_layers = 1;
  std::size_t eval_interval = 500;
  std::size_t eval_subset = 200;
  std::size_t init_stats_utterances = 200;

  // Analyses.
  std::size_t seeds = 5;
  std::size_t probe_bootstrap = 20;
  double probe_train_fraction = 0.7;
  bool pool_include_prompts = false;
  std::size_t clusters_small = 2;  // k for the default prompt size
  std::size_t clusters_large = 3;  // k for the large prompt size

  // Zero-shot adaptation.
  std::string ood_family = "ood";
  std::size_t ood_clips = 8;
  bool raw_bias = false;
  bool bias_with_prompts = true;

  void validate() const;
  /// Canonical text: every key in a fixed order, full precision.
  std::string to_text() const;
  /// SHA-256 of to_text().
  std::string hash() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one "key = value" assignment; used by the parser and CLI overrides.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);

std::vector<std::string> config_keys();

}  // namespace promptlab

#endif  // PROMPTLAB_CONFIG_HPP_
