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

#include "promptlab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "promptlab/analysis.hpp"
#include "promptlab/checkpoint.hpp"
#include "promptlab/random.hpp"

namespace promptlab {
namespace {

SynthConfig small_synth() {
  SynthConfig c;
  c.n_train = 300;
  c.n_eval = 40;
  return c;
}

// Power of the scaled crop, recomputed from the stored alpha and offset.
double snr_from_alpha(const SynthWorld& world, const Utterance& u) {
  const auto& n = *u.noise;
  const auto clip = world.make_clip(n.subtype, n.stream, n.split);
  const auto f = u.clean.cols();
  double p_clean = 0, p_noise = 0;
  for (std::size_t i = 0; i < u.clean.numel(); ++i) {
    p_clean += u.clean.at(i) * u.clean.at(i);
    const double v = n.alpha * clip.frames.at(n.offset * f + i);
    p_noise += v * v;
  }
  return 10.0 * std::log10(p_clean / p_noise);
}

TEST(Mix, HitsRequestedSnr) {
  Rng rng(1);
  std::vector<double> c(40 * 4), z(100 * 4);
  for (auto& x : c) x = normal(rng);
  for (auto& x : z) x = normal(rng, 0, 3);
  const Tensor clean({40, 4}, c), noise({100, 4}, z);
  for (double snr : {0.0, 5.5, 20.0, -3.0}) {
    const auto r = mix_at_snr(clean, noise, snr, rng);
    EXPECT_NEAR(measured_snr_db(clean, r.mixed), snr, 1e-9);
    EXPECT_LE(r.offset + 40, 100u);
  }
}

TEST(Mix, RejectsShortOrSilentNoise) {
  Rng rng(2);
  EXPECT_THROW(mix_at_snr(Tensor::full({10, 2}, 1.0), Tensor::full({5, 2}, 1.0), 0.0, rng), ContractError);
  EXPECT_THROW(mix_at_snr(Tensor::full({3, 2}, 1.0), Tensor::zeros({5, 2}), 0.0, rng), ContractError);
  EXPECT_THROW(mix_at_snr(Tensor::full({3, 2}, 1.0), Tensor::zeros({5, 3}), 0.0, rng), DimensionError);
}

TEST(Corpus, StoredSnrRecomputableFromAlpha) {
  const SynthWorld world(small_synth(), 5);
  const auto corpus = generate_corpus(world, 5);
  int n = 0;
  for (const auto* split : {&corpus.train, &corpus.test_noisy, &corpus.test_ood_noisy}) {
    for (const auto& u : *split) {
      if (!u.noise) continue;
      EXPECT_NEAR(snr_from_alpha(world, u), u.noise->snr_db, 1e-6);
      EXPECT_NEAR(measured_snr_db(u.clean, u.mixed), u.noise->snr_db, 1e-6);
      EXPECT_GE(u.noise->snr_db, 0.0);
      EXPECT_LE(u.noise->snr_db, 20.0);
      ++n;
    }
  }
  EXPECT_GT(n, 200);
}

TEST(Corpus, SplitsUseTheRightNoise) {
  const SynthWorld world(small_synth(), 6);
  const auto corpus = generate_corpus(world, 6);
  for (const auto& u : corpus.test_clean) EXPECT_FALSE(u.noise);
  for (const auto& u : corpus.test_other) EXPECT_FALSE(u.noise);
  for (const auto& u : corpus.dev_clean) EXPECT_FALSE(u.noise);
  for (const auto& u : corpus.test_noisy) {
    ASSERT_TRUE(u.noise);
    EXPECT_NE(u.noise->family, NoiseFamily::kOod);
    EXPECT_EQ(u.noise->split, ClipSplit::kEval);
  }
  for (const auto& u : corpus.train) {
    if (!u.noise) continue;
    EXPECT_NE(u.noise->family, NoiseFamily::kOod);
    EXPECT_EQ(u.noise->split, ClipSplit::kTrain);
  }
  for (const auto& u : corpus.test_ood_noisy) {
    ASSERT_TRUE(u.noise);
    EXPECT_EQ(u.noise->family, NoiseFamily::kOod);
    EXPECT_EQ(u.noise->split, ClipSplit::kEval);
  }
}

TEST(Corpus, UtteranceSeedsAreDisjointAcrossSplits) {
  const SynthWorld world(small_synth(), 7);
  const auto corpus = generate_corpus(world, 7);
  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  for (auto id : Corpus::all_splits()) {
    for (const auto& u : corpus.split(id)) {
      seeds.insert(u.seed);
      ++total;
    }
  }
  EXPECT_EQ(seeds.size(), total);
}

TEST(Corpus, DeterministicForSeed) {
  const SynthWorld a(small_synth(), 8), b(small_synth(), 8), c(small_synth(), 9);
  EXPECT_EQ(manifest_text(generate_corpus(a, 8)), manifest_text(generate_corpus(b, 8)));
  EXPECT_NE(manifest_text(generate_corpus(a, 8)), manifest_text(generate_corpus(c, 9)));
}

TEST(Corpus, CorruptionRateNearConfigured) {
  auto cfg = small_synth();
  cfg.n_train = 4000;
  cfg.n_eval = 1;
  const SynthWorld world(cfg, 10);
  const auto corpus = generate_corpus(world, 10);
  std::size_t noisy = 0;
  for (const auto& u : corpus.train) noisy += u.noise.has_value();
  // 4 sigma of a binomial(4000, 0.8).
  EXPECT_NEAR(static_cast<double>(noisy) / 4000.0, 0.8, 4 * std::sqrt(0.16 / 4000));
}

TEST(Corpus, TokensAndFramesConsistent) {
  const auto cfg = small_synth();
  const SynthWorld world(cfg, 11);
  const auto corpus = generate_corpus(world, 11);
  for (const auto& u : corpus.train) {
    EXPECT_GE(u.tokens.size(), cfg.min_tokens);
    EXPECT_LE(u.tokens.size(), cfg.max_tokens);
    EXPECT_GE(u.frames(), u.tokens.size() * (cfg.template_len - (cfg.length_jitter ? 1 : 0)));
    EXPECT_LE(u.frames(), cfg.max_frames());
    for (int t : u.tokens) EXPECT_LT(t, static_cast<int>(cfg.vocab));
    if (!u.noise) EXPECT_TRUE(u.mixed.same_values(u.clean));
  }
}

TEST(World, SubtypeIdsAndStreams) {
  const SynthWorld world(small_synth(), 12);
  EXPECT_EQ(world.subtypes(NoiseFamily::kTypeA), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(world.subtypes(NoiseFamily::kTypeB), (std::vector<int>{3, 4, 5, 6}));
  EXPECT_EQ(world.subtypes(NoiseFamily::kOod), (std::vector<int>{7, 8, 9}));
  EXPECT_EQ(world.streams(ClipSplit::kTrain), 10u);
  EXPECT_EQ(world.streams(ClipSplit::kEval), 8u);
  EXPECT_EQ(world.family_of(4), NoiseFamily::kTypeB);
  // Train and eval streams of one subtype are different signals.
  EXPECT_FALSE(world.make_clip(0, 0, ClipSplit::kTrain).frames.same_values(world.make_clip(0, 0, ClipSplit::kEval).frames));
  EXPECT_TRUE(world.make_clip(3, 2, ClipSplit::kTrain).frames.same_values(world.make_clip(3, 2, ClipSplit::kTrain).frames));
}

TEST(World, TemplatesAreSeparated) {
  const auto cfg = small_synth();
  const SynthWorld world(cfg, 13);
  const auto& t = world.templates();
  ASSERT_EQ(t.size(), cfg.vocab);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < t[i].pattern.numel(); ++k) {
        d += (t[i].pattern.at(k) - t[j].pattern.at(k)) * (t[i].pattern.at(k) - t[j].pattern.at(k));
      }
      EXPECT_GE(std::sqrt(d), cfg.template_min_distance * cfg.template_scale);
    }
  }
}

TEST(World, NoiseFloorShiftsClipMean) {
  auto cfg = small_synth();
  cfg.noise_floor = 0.0;
  const SynthWorld plain(cfg, 16);
  cfg.noise_floor = 1.0;
  const SynthWorld floored(cfg, 16);
  for (int subtype : {0, 4}) {
    const auto a = plain.make_clip(subtype, 1, ClipSplit::kTrain).frames;
    const auto b = floored.make_clip(subtype, 1, ClipSplit::kTrain).frames;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
      ma += a.at(i) / static_cast<double>(a.numel());
      mb += b.at(i) / static_cast<double>(b.numel());
    }
    // Spectrum gains are positive with unit RMS, so the floor adds a clearly positive mean.
    EXPECT_LT(std::abs(ma), 0.1) << subtype;
    EXPECT_GT(mb - ma, 0.2) << subtype;
  }
  cfg.noise_floor = -1.0;
  EXPECT_THROW(cfg.validate(), ContractError);
}

// Families must be distinguishable from their raw clips, or the noise probe
// task is degenerate.
TEST(World, NoiseFamiliesSeparableByProbe) {
  const SynthWorld world(small_synth(), 14);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (auto fam : {NoiseFamily::kTypeA, NoiseFamily::kTypeB}) {
    for (const auto split : {ClipSplit::kTrain, ClipSplit::kEval}) {
      for (const auto& clip : world.clips(fam, split)) {
        // Windowed summary: per-dim mean square and lag-1 correlation.
        const auto f = clip.frames.cols();
        for (std::size_t w = 0; w + 20 <= clip.frames.rows(); w += 20) {
          std::vector<double> feat(2 * f, 0.0);
          for (std::size_t t = w; t < w + 20; ++t) {
            for (std::size_t k = 0; k < f; ++k) {
              feat[k] += clip.frames.at(t, k) * clip.frames.at(t, k) / 20;
              if (t + 1 < w + 20) feat[f + k] += clip.frames.at(t, k) * clip.frames.at(t + 1, k) / 19;
            }
          }
          x.push_back(feat);
          y.push_back(fam == NoiseFamily::kTypeA ? 0 : 1);
        }
      }
    }
  }
  const auto rep = noise_probe({x, y}, "raw", 0.7, 5, 3);
  EXPECT_GT(rep.median(), 0.75);
}

TEST(Corpus, WriteProducesManifestAndFeatures) {
  const SynthWorld world(small_synth(), 15);
  const auto corpus = generate_corpus(world, 15);
  const auto dir = std::filesystem::temp_directory_path() / "promptlab_corpus_test";
  std::filesystem::remove_all(dir);
  write_corpus(corpus, dir);
  const auto manifest = read_file(dir / "manifest.tsv");
  EXPECT_EQ(manifest, manifest_text(corpus));
  std::size_t lines = std::count(manifest.begin(), manifest.end(), '\n');
  EXPECT_GE(lines, 300u + 7 * 40);
}

TEST(SynthConfig, ValidationNamesProblem) {
  auto c = small_synth();
  c.corrupt_prob = 1.5;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_synth();
  c.clip_frames = 10;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_synth();
  c.template_scale = 0;
  EXPECT_THROW(c.validate(), ContractError);
}

}  // namespace
}  // namespace promptlab
