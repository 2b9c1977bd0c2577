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

// Synthetic noisy sequence-recognition corpus.
//
// Clean utterances are concatenations of per-token feature templates with
// Gaussian jitter. Noise comes in three families: stationary AR(1) colored
// noise (type A), amplitude-modulated bursts (type B) and impulsive click
// trains (OOD, never used for training). Every subtype has a fixed spectral
// profile; individual clips ("streams") are drawn with split-specific seeds
// so training and evaluation never share a clip.
//
// Everything is a pure function of (SynthConfig, seed).

#ifndef PROMPTLAB_SYNTH_HPP_
#define PROMPTLAB_SYNTH_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptlab/ctc.hpp"
#include "promptlab/random.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

enum class NoiseFamily { kTypeA, kTypeB, kOod };
enum class ClipSplit { kTrain, kEval };

std::string to_string(NoiseFamily f);
NoiseFamily parse_noise_family(const std::string& s);
std::string to_string(ClipSplit s);

struct SynthConfig {
  std::size_t vocab = 12;
  std::size_t feature_dim = 40;
  std::size_t template_len = 6;
  std::size_t min_tokens = 4;
  std::size_t max_tokens = 12;
  double jitter_sigma = 0.1;
  double other_jitter_sigma = 0.2;
  bool length_jitter = true;
  /// Template entries are N(0, template_scale^2).
  double template_scale = 0.5;
  /// Minimum pairwise L2 distance between flattened templates, in units of
  /// template_scale.
  double template_min_distance = 12.0;

  std::size_t n_train = 5000;
  std::size_t n_eval = 500;
  double corrupt_prob = 0.8;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;

  std::size_t type_a_subtypes = 3;
  std::size_t type_b_subtypes = 4;
  std::size_t ood_subtypes = 3;
  std::size_t train_streams = 10;
  std::size_t eval_streams = 8;
  std::size_t clip_frames = 200;
  /// Type A and B clips carry a mean offset of noise_floor times the subtype
  /// spectrum, the feature-domain analog of a background noise floor.
  double noise_floor = 1.0;

  void validate() const;
  std::size_t max_frames() const;
};

struct TokenTemplate {
  int token = 0;
  Tensor pattern;  // template_len x feature_dim
};

struct NoiseMeta {
  NoiseFamily family = NoiseFamily::kTypeA;
  int subtype = 0;  // global subtype id
  int stream = 0;
  ClipSplit split = ClipSplit::kTrain;
  double snr_db = 0.0;
  double alpha = 0.0;   // scale applied to the noise crop
  std::size_t offset = 0;  // crop start frame
};

struct Utterance {
  std::string id;
  std::uint64_t seed = 0;
  TokenSequence tokens;
  Tensor clean;   // T x f
  Tensor mixed;   // T x f; equals clean when no noise was applied
  std::optional<NoiseMeta> noise;

  std::size_t frames() const { return clean.rows(); }
};

struct NoiseClip {
  NoiseFamily family = NoiseFamily::kTypeA;
  int subtype = 0;
  int stream = 0;
  ClipSplit split = ClipSplit::kTrain;
  Tensor frames;  // clip_frames x f

  std::string id() const;
};

struct MixResult {
  Tensor mixed;
  double alpha = 0.0;
  std::size_t offset = 0;
};

/// mixed = clean + alpha * noise[offset : offset+T], with alpha chosen so that
/// 10 log10(P_clean / P_scaled_noise) == snr_db; powers are mean squares over
/// all entries. offset is drawn uniformly from rng.
MixResult mix_at_snr(const Tensor& clean, const Tensor& noise, double snr_db, Rng& rng);

/// 10 log10(P(clean) / P(mixed - clean)).
double measured_snr_db(const Tensor& clean, const Tensor& mixed);

double mean_square(std::span<const double> v);

class SynthWorld {
 public:
  SynthWorld(SynthConfig config, std::uint64_t seed);

  const SynthConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<TokenTemplate>& templates() const { return templates_; }

  /// Clean utterance from templates with frame jitter sigma.
  Utterance synth_utterance(const TokenSequence& tokens, std::uint64_t seed, double sigma) const;
  Utterance synth_utterance(const TokenSequence& tokens, std::uint64_t seed) const {
    return synth_utterance(tokens, seed, config_.jitter_sigma);
  }

  /// Global subtype ids of a family: type A first, then type B, then OOD.
  std::vector<int> subtypes(NoiseFamily family) const;
  NoiseFamily family_of(int subtype) const;
  std::size_t streams(ClipSplit split) const;

  NoiseClip make_clip(int subtype, int stream, ClipSplit split) const;
  std::vector<NoiseClip> clips(NoiseFamily family, ClipSplit split) const;

 private:
  struct SubtypeProfile {
    std::vector<double> gain;  // per feature dim, mean square 1
    double ar_coeff = 0.0;     // type A
    std::size_t period = 0;    // type B
    double duty = 0.0;         // type B
    double click_rate = 0.0;   // OOD
    double click_decay = 0.0;  // OOD
  };

  SynthConfig config_;
  std::uint64_t seed_;
  std::vector<TokenTemplate> templates_;
  std::vector<SubtypeProfile> profiles_;
};

enum class SplitId : std::uint64_t {
  kTrain = 0,
  kDevClean,
  kDevNoisy,
  kTestClean,
  kTestOther,
  kTestNoisy,
  kDevOodNoisy,
  kTestOodNoisy,
};

std::string to_string(SplitId s);

struct Corpus {
  std::uint64_t seed = 0;
  std::vector<Utterance> train;
  std::vector<Utterance> dev_clean;
  std::vector<Utterance> dev_noisy;
  std::vector<Utterance> test_clean;
  std::vector<Utterance> test_other;
  std::vector<Utterance> test_noisy;
  std::vector<Utterance> dev_ood_noisy;
  std::vector<Utterance> test_ood_noisy;

  const std::vector<Utterance>& split(SplitId id) const;
  std::vector<Utterance>& split(SplitId id);
  static std::vector<SplitId> all_splits();
};

Corpus generate_corpus(const SynthWorld& world, std::uint64_t seed);

/// One line per utterance, tab separated:
/// split id seed tokens(comma) family subtype stream snr_db alpha offset
/// with "-" in the noise columns for clean utterances.
std::string manifest_text(const Corpus& corpus);

/// Writes the manifest plus a tensor container with every utterance's clean
/// and mixed features ("<split>/<id>/clean", "<split>/<id>/mixed").
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace promptlab

#endif  // PROMPTLAB_SYNTH_HPP_
