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

#include "promptlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "../common/oracles.hpp"

namespace promptlab {
namespace {

struct Fixture {
  SynthConfig synth;
  Corpus corpus;
  EncoderModel encoder;
  DecoderHead head{16, 4, 1, 7};

  Fixture() {
    synth.feature_dim = 8;
    synth.template_min_distance = 6.0;
    synth.vocab = 4;
    synth.max_tokens = 4;
    synth.n_train = 20;
    synth.n_eval = 6;
    const SynthWorld world(synth, 21);
    corpus = generate_corpus(world, 21);
    EncoderConfig ec;
    ec.feature_dim = 8;
    ec.layers = 1;
    ec.d_model = 16;
    ec.heads = 2;
    ec.ffn = 32;
    encoder = EncoderModel(ec, 22);
    encoder.freeze();
  }

  std::vector<EvalSet> sets() const {
    return {{"test_clean", corpus.test_clean}, {"test_noisy", corpus.test_noisy}};
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

TEST(EvalArm, CountsMatchDirectDecode) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(3, 16, 0.5, 2);
  const auto sets = f.sets();
  const auto table = eval_arm(f.encoder, prompts, f.head, "x", sets);
  ASSERT_EQ(table.size(), 2u);
  ErrorCounts want;
  for (const auto& u : f.corpus.test_noisy) {
    want.add(u.tokens, greedy_decode(f.head.logits(forward(f.encoder, u.mixed, prompts).frames)));
  }
  const auto& row = find_row(table, "x", "test_noisy");
  EXPECT_EQ(row.edits, want.edits);
  EXPECT_EQ(row.ref_tokens, want.ref_tokens);
  EXPECT_DOUBLE_EQ(row.wer, want.rate());
  EXPECT_THROW(find_row(table, "y", "test_noisy"), ContractError);
}

TEST(Attack, ArmsAndShapes) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(4, 16, 0.5, 3);
  const auto sets = f.sets();
  const auto table = attack_random_prompts(f.encoder, prompts, f.head, sets, 9);
  EXPECT_EQ(table.size(), 6u);
  std::set<std::string> arms;
  for (const auto& r : table) arms.insert(r.arm);
  EXPECT_EQ(arms, (std::set<std::string>{"tuned", "random", "zero"}));
  const auto rnd = random_prompts(prompts, 9);
  EXPECT_EQ(rnd.count(), 4u);
  EXPECT_TRUE(rnd.values().same_values(random_prompts(prompts, 9).values()));
  EXPECT_FALSE(rnd.values().same_values(random_prompts(prompts, 10).values()));
  EXPECT_THROW(attack_random_prompts(f.encoder, PromptMatrix(16), f.head, sets, 9), ContractError);
}

TEST(RemovePrompts, RemovedArmEqualsPromptlessEval) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(4, 16, 0.5, 3);
  const auto sets = f.sets();
  const auto table = remove_all_prompts_eval(f.encoder, prompts, f.head, sets);
  const auto none = eval_arm(f.encoder, PromptMatrix(16), f.head, "removed", sets);
  for (const auto& r : none) {
    const auto& got = find_row(table, "removed", r.split);
    EXPECT_EQ(got.edits, r.edits);
    EXPECT_EQ(got.mean_loss, r.mean_loss);
  }
}

TEST(Ablation, DeltaIsReducedMinusFull) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(3, 16, 0.8, 5);
  const auto sets = f.sets();
  const auto rep = ablate_single_prompts(f.encoder, prompts, f.head, sets);
  ASSERT_EQ(rep.rows.size(), 3u);
  const auto full = eval_arm(f.encoder, prompts, f.head, "full", sets);
  const auto drop2 = eval_arm(f.encoder, prompts.select(std::vector<std::size_t>{0, 2}), f.head, "r", sets);
  EXPECT_EQ(rep.rows[1].prompt_id, 2u);
  for (std::size_t s = 0; s < 2; ++s) {
    EXPECT_DOUBLE_EQ(rep.full_wer[s], full[s].wer);
    EXPECT_DOUBLE_EQ(rep.rows[1].delta[s], drop2[s].wer - full[s].wer);
    EXPECT_NEAR(rep.rows[1].loss_delta[s], drop2[s].mean_loss - full[s].mean_loss, 1e-12);
  }
  EXPECT_THROW(ablate_single_prompts(f.encoder, prompts.select(std::vector<std::size_t>{0}), f.head, sets), ContractError);
}

std::vector<std::vector<double>> two_blobs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 0.1);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = i % 2 ? 5.0 : -5.0;
    rows.push_back({c + z(gen), c + z(gen), z(gen)});
  }
  return rows;
}

TEST(KMeans, SeparatesBlobs) {
  const auto rows = two_blobs(20, 1);
  const auto km = kmeans(rows, 2, 4);
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_EQ(km.labels[i], km.labels[i % 2]);
  EXPECT_NE(km.labels[0], km.labels[1]);
  EXPECT_LT(km.inertia, 20 * 3 * 0.1);
}

TEST(KMeans, InvariantToRowOrder) {
  auto rows = two_blobs(16, 2);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> z;
  for (auto& r : rows) r[2] += z(gen);  // blur so more than one clustering is plausible
  const auto base = kmeans(rows, 3, 11);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<std::size_t> perm(rows.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<std::vector<double>> shuffled;
    for (auto p : perm) shuffled.push_back(rows[p]);
    const auto km = kmeans(shuffled, 3, 11);
    for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(km.labels[i], base.labels[perm[i]]);
    EXPECT_DOUBLE_EQ(km.inertia, base.inertia);
  }
}

TEST(KMeans, RejectsBadK) {
  const auto rows = two_blobs(4, 3);
  EXPECT_THROW(kmeans(rows, 0, 1), ContractError);
  EXPECT_THROW(kmeans(rows, 5, 1), ContractError);
  EXPECT_THROW(kmeans({}, 1, 1), ContractError);
}

TEST(Partition, ValidateRequiresDisjointCover) {
  EXPECT_NO_THROW((PromptPartition{{0, 2}, {1}}).validate(3));
  EXPECT_THROW((PromptPartition{{0, 1}, {1}}).validate(3), ContractError);
  EXPECT_THROW((PromptPartition{{0}, {1}}).validate(3), ContractError);
  EXPECT_THROW((PromptPartition{{0, 3}, {1}}).validate(3), ContractError);
}

TEST(Partition, ContentClusterHasLargestCleanDelta) {
  // Rows 0..2 near +e1, rows 3..5 near -e1; removing rows 3..5 hurts clean WER most.
  std::vector<double> v(6 * 4, 0.0);
  for (std::size_t i = 0; i < 6; ++i) {
    v[i * 4] = i < 3 ? 3.0 : -3.0;
    v[i * 4 + 1] = 0.01 * static_cast<double>(i);
  }
  const PromptMatrix prompts(Tensor({6, 4}, v));
  AblationReport ab;
  ab.splits = {"test_noisy", "test_clean"};
  for (std::size_t i = 0; i < 6; ++i) {
    const double d = i < 3 ? 0.01 : 0.2;
    ab.rows.push_back({i + 1, {0, 0}, {0.5, d}, {0, 0}});
  }
  const auto p = derive_partition(ab, prompts, 2, 7);
  EXPECT_EQ(p.set1_content, (std::vector<std::size_t>{3, 4, 5}));
  EXPECT_EQ(p.set2_noise, (std::vector<std::size_t>{0, 1, 2}));
  const auto all = derive_partition(ab, prompts, 1, 7);
  EXPECT_EQ(all.set1_content.size(), 6u);
  EXPECT_TRUE(all.set2_noise.empty());
  EXPECT_THROW(derive_partition(ab, prompts, 2, 7, "dev_clean"), ContractError);
}

TEST(Partition, TiesFallBackToLossDelta) {
  std::vector<double> v(4 * 2, 0.0);
  for (std::size_t i = 0; i < 4; ++i) v[i * 2] = i < 2 ? 1.0 : -1.0;
  const PromptMatrix prompts(Tensor({4, 2}, v));
  AblationReport ab;
  ab.splits = {"test_clean"};
  for (std::size_t i = 0; i < 4; ++i) ab.rows.push_back({i + 1, {0}, {0.0}, {i < 2 ? 0.3 : 0.1}});
  const auto p = derive_partition(ab, prompts, 2, 1);
  EXPECT_EQ(p.set1_content, (std::vector<std::size_t>{0, 1}));
}

TEST(Subsets, ArmsUseSelectedRows) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(4, 16, 0.5, 8);
  const auto sets = f.sets();
  const PromptPartition part{{0, 3}, {1, 2}};
  const auto t = eval_prompt_subsets(f.encoder, prompts, f.head, part, sets);
  EXPECT_EQ(t.size(), 6u);
  const auto want = eval_arm(f.encoder, prompts.select(std::vector<std::size_t>{1, 2}), f.head, "set2_only", sets);
  EXPECT_EQ(find_row(t, "set2_only", "test_noisy").mean_loss, find_row(want, "set2_only", "test_noisy").mean_loss);
}

TEST(Projection, MatchesJacobiOracle) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> rows(9, std::vector<double>(5));
  for (auto& r : rows) {
    for (std::size_t j = 0; j < 5; ++j) r[j] = z(gen) * (1.0 + static_cast<double>(j));
  }
  const auto p = project_rows_2d(rows);

  oracle::Mat x = rows;
  std::vector<double> mu(5, 0.0);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < 5; ++j) mu[j] += r[j] / 9.0;
  }
  for (auto& r : x) {
    for (std::size_t j = 0; j < 5; ++j) r[j] -= mu[j];
  }
  oracle::Mat cov(5, std::vector<double>(5, 0.0));
  for (const auto& r : x) {
    for (std::size_t a = 0; a < 5; ++a) {
      for (std::size_t b = 0; b < 5; ++b) cov[a][b] += r[a] * r[b] / 9.0;
    }
  }
  std::vector<double> vals;
  oracle::Mat vecs;
  oracle::jacobi_eigen(cov, vals, vecs);
  ASSERT_EQ(p.eigenvalues.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(p.eigenvalues[i], vals[i], 1e-10);
  for (std::size_t c = 0; c < 2; ++c) {
    // Sign convention: the largest-magnitude loading is positive.
    std::size_t arg = 0;
    for (std::size_t j = 1; j < 5; ++j) {
      if (std::abs(vecs[j][c]) > std::abs(vecs[arg][c])) arg = j;
    }
    const double sign = vecs[arg][c] < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < 9; ++i) {
      double y = 0;
      for (std::size_t j = 0; j < 5; ++j) y += x[i][j] * vecs[j][c] * sign;
      EXPECT_NEAR(p.coords[i][c], y, 1e-9);
    }
  }
}

TEST(Projection, DegenerateGeometryRaises) {
  std::vector<std::vector<double>> line;
  for (int i = 0; i < 5; ++i) line.push_back({1.0 * i, 2.0 * i, -1.0 * i});
  EXPECT_THROW(project_rows_2d(line), DegenerateGeometryError);
  EXPECT_THROW(project_rows_2d({{1, 2}, {3, 4}}), ContractError);
  EXPECT_THROW(project_prompts_2d(PromptMatrix::gaussian(2, 4, 1.0, 1)), ContractError);
}

TEST(Probe, SeparableFixtureIsLearned) {
  std::mt19937_64 gen(17);
  std::normal_distribution<double> z(0.0, 0.3);
  PooledSet set;
  for (int i = 0; i < 90; ++i) {
    const int label = i % 3;
    std::vector<double> x(4);
    for (auto& v : x) v = z(gen);
    x[static_cast<std::size_t>(label)] += 3.0;
    set.features.push_back(x);
    set.labels.push_back(label * 2 + 1);
  }
  LogisticProbe probe;
  probe.fit(set.features, set.labels);
  EXPECT_EQ(probe.accuracy(set.features, set.labels), 1.0);
  const auto pred = probe.predict({set.features[0], set.features[1]});
  EXPECT_EQ(pred, (std::vector<int>{1, 3}));
  const auto rep = noise_probe(set, "arm", 0.7, 6, 2);
  EXPECT_EQ(rep.accuracies.size(), 6u);
  EXPECT_GT(rep.median(), 0.95);
  EXPECT_EQ(rep.accuracies, noise_probe(set, "arm", 0.7, 6, 2).accuracies);
}

TEST(Probe, ChanceOnShuffledLabels) {
  std::mt19937_64 gen(19);
  std::normal_distribution<double> z;
  PooledSet set;
  for (int i = 0; i < 200; ++i) {
    set.features.push_back({z(gen), z(gen)});
    set.labels.push_back(static_cast<int>(gen() % 2));
  }
  EXPECT_LT(noise_probe(set, "arm", 0.7, 10, 3).median(), 0.65);
}

TEST(Probe, RejectsSingleClass) {
  LogisticProbe probe;
  EXPECT_THROW(probe.fit({{1.0}, {2.0}}, {0, 0}), ContractError);
  EXPECT_THROW(probe.fit({{1.0}}, {0, 1}), ContractError);
}

TEST(Pooling, SkipsCleanAndLabelsBySubtype) {
  auto& f = fixture();
  const auto prompts = PromptMatrix::gaussian(2, 16, 0.5, 1);
  const auto set = pooled_features(f.encoder, prompts, f.corpus.train);
  std::size_t noisy = 0;
  for (const auto& u : f.corpus.train) noisy += u.noise.has_value();
  EXPECT_EQ(set.features.size(), noisy);
  const auto* u = &*std::find_if(f.corpus.train.begin(), f.corpus.train.end(), [](const auto& x) { return x.noise; });
  EXPECT_EQ(set.labels.front(), u->noise->subtype);
  const auto out = forward(f.encoder, u->mixed, prompts);
  std::vector<double> mean(16, 0.0);
  for (std::size_t r = 0; r < out.frames.rows(); ++r) {
    for (std::size_t c = 0; c < 16; ++c) mean[c] += out.frames.at(r, c) / static_cast<double>(out.frames.rows());
  }
  for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(set.features.front()[c], mean[c], 1e-12);
}

TEST(Median, EvenAndOdd) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 2, 3}), 2.5);
  EXPECT_THROW(median({}), ContractError);
}

}  // namespace
}  // namespace promptlab
