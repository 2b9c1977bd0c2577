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

#include "promptlab/ctc.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "../common/oracles.hpp"

namespace promptlab {
namespace {

Tensor random_logits(std::size_t T, std::size_t K, std::mt19937_64& gen, double spread = 2.0) {
  std::normal_distribution<double> n(0.0, spread);
  std::vector<double> v(T * K);
  for (auto& x : v) x = n(gen);
  return Tensor({T, K}, v);
}

TokenSequence random_target(std::size_t max_len, std::size_t V, std::mt19937_64& gen) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> tok(0, static_cast<int>(V) - 1);
  TokenSequence t(len(gen));
  for (auto& x : t) x = tok(gen);
  return t;
}

TEST(Ctc, MatchesPathEnumeration) {
  PrecisionScope f64(Precision::kF64);
  std::mt19937_64 gen(2024);
  int checked = 0;
  for (int i = 0; i < 300; ++i) {
    const std::size_t V = 1 + gen() % 3, T = 1 + gen() % 6;
    const auto target = random_target(3, V, gen);
    const auto logits = random_logits(T, V + 1, gen);
    const double brute = oracle::ctc_brute_force_log_likelihood(logits, target);
    if (T < ctc_min_frames(target)) {
      EXPECT_TRUE(std::isinf(brute));
      EXPECT_THROW(ctc_loss(logits, target), InfeasibleTargetError);
      continue;
    }
    EXPECT_NEAR(ctc_log_likelihood(logits, target), brute, 1e-9) << "T=" << T << " V=" << V;
    EXPECT_NEAR(-ctc_loss(logits, target).item(), brute, 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(Ctc, GradientMatchesFiniteDifference) {
  PrecisionScope f64(Precision::kF64);
  std::mt19937_64 gen(7);
  for (int rep = 0; rep < 5; ++rep) {
    auto logits = random_logits(5, 4, gen);
    const TokenSequence target = {1, 1, 2};
    logits.set_trainable(true);
    GradTape tape;
    GradientMap g;
    {
      TapeScope scope(tape);
      g = tape.backward(ctc_loss(logits, target));
    }
    const Grad& grad = *g.find(logits);
    auto data = logits.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double fd =
          oracle::central_difference([&] { return -ctc_log_likelihood(logits, target); }, data[i], 1e-6);
      EXPECT_NEAR(grad[i], fd, 1e-6);
    }
  }
}

TEST(Ctc, GradientRowsSumToZero) {
  // d(-log p)/d logits = softmax - posterior occupancy, so each row sums to 0.
  PrecisionScope f64(Precision::kF64);
  std::mt19937_64 gen(9);
  auto logits = random_logits(8, 5, gen);
  logits.set_trainable(true);
  GradTape tape;
  TapeScope scope(tape);
  const auto g = tape.backward(ctc_loss(logits, {0, 2, 3}));
  const Grad& grad = *g.find(logits);
  for (std::size_t t = 0; t < 8; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += grad[t * 5 + k];
    EXPECT_NEAR(s, 0.0, 1e-12);
  }
}

TEST(Ctc, MinFramesCountsRepeats) {
  EXPECT_EQ(ctc_min_frames({}), 0u);
  EXPECT_EQ(ctc_min_frames({1, 2, 3}), 3u);
  EXPECT_EQ(ctc_min_frames({1, 1, 2, 2}), 6u);
}

TEST(Ctc, EmptyTargetIsRejected) {
  std::mt19937_64 gen(3);
  EXPECT_THROW(ctc_loss(random_logits(4, 3, gen), {}), ContractError);
}

TEST(Ctc, LongSequenceStaysFinite) {
  PrecisionScope f64(Precision::kF64);
  std::mt19937_64 gen(4);
  const auto logits = random_logits(400, 13, gen, 10.0);
  TokenSequence target;
  for (int i = 0; i < 60; ++i) target.push_back(i % 12);
  EXPECT_TRUE(std::isfinite(ctc_log_likelihood(logits, target)));
}

TEST(Ctc, GreedyDecodeCollapsesRepeatsAndBlanks) {
  // Blank is the last column (index 3).
  const Tensor logits({6, 4}, {
                                  5, 0, 0, 0,  //
                                  5, 0, 0, 0,  //
                                  0, 0, 0, 5,  //
                                  5, 0, 0, 0,  //
                                  0, 0, 5, 0,  //
                                  0, 0, 0, 5,  //
                              });
  EXPECT_EQ(greedy_decode(logits), (TokenSequence{0, 0, 2}));
}

TEST(EditDistance, MatchesRecursiveOracle) {
  std::mt19937_64 gen(11);
  for (int i = 0; i < 300; ++i) {
    TokenSequence a(gen() % 7), b(gen() % 7);
    for (auto& x : a) x = static_cast<int>(gen() % 3);
    for (auto& x : b) x = static_cast<int>(gen() % 3);
    EXPECT_EQ(edit_distance(a, b), oracle::edit_distance_recursive(a, b));
  }
}

TEST(EditDistance, MetricProperties) {
  std::mt19937_64 gen(12);
  for (int i = 0; i < 100; ++i) {
    TokenSequence a(gen() % 6), b(gen() % 6), c(gen() % 6);
    for (auto* s : {&a, &b, &c}) {
      for (auto& x : *s) x = static_cast<int>(gen() % 4);
    }
    EXPECT_EQ(edit_distance(a, a), 0u);
    EXPECT_EQ(edit_distance(a, b), edit_distance(b, a));
    EXPECT_LE(edit_distance(a, c), edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST(Wer, CorpusRateIsPooled) {
  ErrorCounts counts;
  counts.add({1, 2, 3, 4}, {1, 2, 3, 4});
  counts.add({1, 2}, {2});
  EXPECT_EQ(counts.edits, 1u);
  EXPECT_EQ(counts.ref_tokens, 6u);
  EXPECT_DOUBLE_EQ(counts.rate(), 1.0 / 6.0);
  EXPECT_DOUBLE_EQ(wer({1, 2}, {3, 4, 5}), 1.5);
  EXPECT_THROW(wer({}, {1}), ContractError);
}

TEST(DecoderHead, ShapesAndParameterCount) {
  DecoderHead linear(8, 12, 1, 1);
  EXPECT_EQ(linear.parameter_count(), 8u * 13 + 13);
  DecoderHead mlp(8, 12, 2, 1);
  EXPECT_EQ(mlp.parameter_count(), 8u * 8 + 8 + 8 * 13 + 13);
  EXPECT_EQ(linear.logits(Tensor::zeros({5, 8})).shape(), (Shape{5, 13}));
  EXPECT_EQ(linear.blank(), 12u);
  EXPECT_FALSE(linear.parameters().front().trainable());
  linear.set_trainable(true);
  EXPECT_TRUE(linear.parameters().front().trainable());
}

}  // namespace
}  // namespace promptlab
