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

// End-to-end experiment: corpus, backbone pretraining, prompt tuning over
// several training seeds, every analysis, and the report files.

#ifndef PROMPTLAB_PIPELINE_HPP_
#define PROMPTLAB_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "promptlab/adaptation.hpp"
#include "promptlab/analysis.hpp"
#include "promptlab/checkpoint.hpp"
#include "promptlab/config.hpp"
#include "promptlab/synth.hpp"
#include "promptlab/training.hpp"

namespace promptlab {

using LogFn = std::function<void(const std::string&)>;

/// Stable key of everything the pretrained backbone depends on.
std::string backbone_cache_key(const ExperimentConfig& cfg);

Corpus build_corpus(const ExperimentConfig& cfg);

/// Pretrains the backbone, or loads it from cache_dir when a checkpoint with
/// the same key exists there. An empty cache_dir disables caching.
EncoderModel obtain_backbone(const Corpus& corpus, const ExperimentConfig& cfg,
                             const std::filesystem::path& cache_dir, const LogFn& log,
                             double* dev_clean_wer = nullptr);

/// Seed of training run s under the root seed.
std::uint64_t training_seed(std::uint64_t root, std::size_t s);

/// The named evaluation splits used by the experiments.
std::vector<EvalSet> test_sets(const Corpus& corpus);     // test_clean, test_other, test_noisy
std::vector<EvalSet> ood_sets(const Corpus& corpus);      // dev_ood_noisy, test_ood_noisy

/// Train-split clips of a family ordered by stream, then subtype, so a prefix
/// covers every subtype.
std::vector<NoiseClip> bias_clips(const SynthWorld& world, NoiseFamily family);

struct SeedResult {
  std::uint64_t seed = 0;
  TuneResult baseline;  // m = 0
  TuneResult tuned;     // m = cfg.prompts
  WerTable baseline_wer;
  WerTable table1;  // tuned / random / zero
  WerTable table3;  // tuned / removed
  AblationReport ablation;
  PromptPartition partition;
  WerTable table2;  // full / set1_only / set2_only
  std::optional<Projection> projection;
  std::vector<ProbeReport> probes;  // baseline, full, set1_only, set2_only
  NoiseBiasVector bias;
  WerTable table4;  // baseline / vanilla / shifted
  bool identity_shift_exact = false;
};

struct LargeResult {
  std::uint64_t seed = 0;
  TuneResult tuned;
  WerTable table1;
  AblationReport ablation;
  PromptPartition partition;
  std::optional<Projection> projection;
};

struct PipelineResult {
  std::string encoder_hash;
  double pretrain_dev_clean_wer = 0.0;
  std::vector<SeedResult> seeds;
  std::optional<LargeResult> large;
};

struct OrderingCheck {
  std::string name;
  bool passed = false;
  bool informational = false;  // reported, never fails a run
  std::string detail;
};

/// Median-over-seeds ordering checks on a finished run.
std::vector<OrderingCheck> ordering_checks(const PipelineResult& result);

/// Runs one training seed: both arms plus every analysis.
SeedResult run_seed(const EncoderModel& encoder, const Corpus& corpus, const SynthWorld& world,
                    const ExperimentConfig& cfg, std::uint64_t seed, const LogFn& log);

/// Full pipeline. Writes CSV tables, JSON summary, sidecars, checkpoints and
/// run records under out_dir.
PipelineResult reproduce_all(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             const std::filesystem::path& cache_dir, const LogFn& log);

/// Writes run_metadata.json (the only file with timestamps).
void write_run_metadata(const std::filesystem::path& out_dir, const std::string& command,
                        const ExperimentConfig& cfg, const std::vector<std::string>& checkpoint_hashes);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace promptlab

#endif  // PROMPTLAB_PIPELINE_HPP_
