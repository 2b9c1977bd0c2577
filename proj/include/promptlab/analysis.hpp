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

// Experiments on a tuned model: random-prompt attack, prompt removal,
// single-prompt ablation, prompt partitioning by k-means, subset inference,
// 2-D projection of the prompt vectors and the pooled-feature noise probe.
//
// All prompt subsets go through PromptMatrix::select, so removal always
// means physically dropping rows.

#ifndef PROMPTLAB_ANALYSIS_HPP_
#define PROMPTLAB_ANALYSIS_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promptlab/ctc.hpp"
#include "promptlab/encoder.hpp"
#include "promptlab/synth.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

/// A named evaluation split.
struct EvalSet {
  std::string name;
  std::span<const Utterance> utterances;
};

struct WerRow {
  std::string arm;
  std::string split;
  double wer = 0.0;
  std::size_t edits = 0;
  std::size_t ref_tokens = 0;
  double mean_loss = 0.0;
};

using WerTable = std::vector<WerRow>;

/// WER of one prompt configuration on each set, in set order.
WerTable eval_arm(const EncoderModel& encoder, const PromptMatrix& prompts, const DecoderHead& head,
                  const std::string& arm, std::span<const EvalSet> sets);

/// Looks up a row; throws ContractError when absent.
const WerRow& find_row(const WerTable& table, const std::string& arm, const std::string& split);

/// Prompts replaced by rows drawn from N(0, 1), same shape as prompts.
PromptMatrix random_prompts(const PromptMatrix& prompts, std::uint64_t seed);

/// Arms "tuned", "random" (standard Gaussian rows) and "zero" (all-zero rows).
WerTable attack_random_prompts(const EncoderModel& encoder, const PromptMatrix& prompts,
                               const DecoderHead& head, std::span<const EvalSet> sets,
                               std::uint64_t seed);

/// Arms "tuned" and "removed" (m = 0 with the tuned head).
WerTable remove_all_prompts_eval(const EncoderModel& encoder, const PromptMatrix& prompts,
                                 const DecoderHead& head, std::span<const EvalSet> sets);

struct AblationRow {
  std::size_t prompt_id = 0;        // 1-based
  std::vector<double> wer;          // per split
  std::vector<double> delta;        // wer - full wer, per split
  std::vector<double> loss_delta;   // mean CTC loss difference, per split
};

struct AblationReport {
  std::vector<std::string> splits;
  std::vector<double> full_wer;
  std::vector<double> full_loss;
  std::vector<AblationRow> rows;
};

/// For each prompt k, evaluates with every prompt except k. Requires m >= 2.
AblationReport ablate_single_prompts(const EncoderModel& encoder, const PromptMatrix& prompts,
                                     const DecoderHead& head, std::span<const EvalSet> sets);

/// 0-based prompt row index sets. set1 holds content prompts, set2 noise
/// prompts; both sorted ascending.
struct PromptPartition {
  std::vector<std::size_t> set1_content;
  std::vector<std::size_t> set2_noise;

  /// Throws ContractError unless the sets are disjoint and cover 0..m-1.
  void validate(std::size_t m) const;
};

struct KMeansResult {
  std::vector<std::size_t> labels;              // per row
  std::vector<std::vector<double>> centroids;   // k x dim
  std::size_t iterations = 0;
  std::size_t attempts = 1;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations (at most max_iter). Rows are
/// processed in lexicographic order so the result does not depend on the
/// input row order; labels are reported for the original rows. Ties in
/// assignment go to the lowest cluster index. An empty cluster restarts with
/// the next seed, up to 10 restarts.
KMeansResult kmeans(const std::vector<std::vector<double>>& rows, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100);

/// Clusters the raw prompt vectors into k groups. The cluster whose members
/// have the largest mean ablation delta on clean_split becomes set1 (ties
/// broken by mean clean loss delta, then by lowest member index); all other
/// clusters form set2. k = 1 yields {all, empty}.
PromptPartition derive_partition(const AblationReport& ablation, const PromptMatrix& prompts,
                                 std::size_t k, std::uint64_t seed,
                                 const std::string& clean_split = "test_clean");

/// Arms "full", "set1_only" and "set2_only".
WerTable eval_prompt_subsets(const EncoderModel& encoder, const PromptMatrix& prompts,
                             const DecoderHead& head, const PromptPartition& partition,
                             std::span<const EvalSet> sets);

class DegenerateGeometryError : public ContractError {
 public:
  using ContractError::ContractError;
};

struct Projection {
  std::vector<std::array<double, 2>> coords;  // m rows
  std::vector<double> eigenvalues;            // covariance spectrum, descending
};

/// Top-2 principal components of the mean-centered rows. Each component is
/// signed so its largest-magnitude loading is positive. Needs at least 3
/// rows and rank >= 2.
Projection project_rows_2d(const std::vector<std::vector<double>>& rows);
Projection project_prompts_2d(const PromptMatrix& prompts);

/// Rows of a tensor as vectors.
std::vector<std::vector<double>> tensor_rows(const Tensor& t);

// Noise probe ------------------------------------------------------------------

struct PooledSet {
  std::vector<std::vector<double>> features;
  std::vector<int> labels;
};

/// Time-average of the frame block (optionally together with the prompt
/// block) of each noisy utterance, labelled with its noise subtype.
/// Utterances without noise are skipped.
PooledSet pooled_features(const EncoderModel& encoder, const PromptMatrix& prompts,
                          std::span<const Utterance> utterances, bool include_prompts = false);

/// Mean over rows of the frame block, or of frames and prompts together.
std::vector<double> pool_output(const LatentOutput& out, bool include_prompts);

/// Multinomial logistic regression on standardized features, trained by
/// full-batch gradient descent with a small L2 penalty.
class LogisticProbe {
 public:
  struct Options {
    std::size_t iterations = 300;
    double learning_rate = 0.5;
    double l2 = 1e-3;
  };

  LogisticProbe() = default;
  explicit LogisticProbe(Options options) : options_(options) {}

  void fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y);
  std::vector<int> predict(const std::vector<std::vector<double>>& x) const;
  double accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const;

 private:
  Options options_;
  std::vector<int> classes_;
  std::vector<double> mean_, scale_;
  std::vector<double> weights_;  // (dim + 1) x classes, bias last
};

struct ProbeReport {
  std::string arm;
  std::vector<double> accuracies;  // one per bootstrap split
  double median() const;
};

/// Accuracy of the probe over `bootstraps` random train/test splits of the
/// pooled set. Throws ContractError with fewer than two classes.
ProbeReport noise_probe(const PooledSet& pooled, const std::string& arm, double train_fraction,
                        std::size_t bootstraps, std::uint64_t seed,
                        LogisticProbe::Options options = {});

/// Median of a non-empty sample (mean of the middle pair for even sizes).
double median(std::vector<double> values);

}  // namespace promptlab

#endif  // PROMPTLAB_ANALYSIS_HPP_
