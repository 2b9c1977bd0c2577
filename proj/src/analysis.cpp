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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "promptlab/random.hpp"
#include "promptlab/training.hpp"

namespace promptlab {

namespace {

constexpr std::uint64_t kAttackStream = 0x41545441;
constexpr std::uint64_t kProbeStream = 0x50524f42;

std::vector<std::size_t> all_rows(std::size_t m) {
  std::vector<std::size_t> v(m);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct LloydOutcome {
  std::vector<std::size_t> labels;
  std::vector<std::vector<double>> centroids;
  std::size_t iterations = 0;
  bool empty_cluster = false;
  double inertia = 0.0;
};

LloydOutcome lloyd(const std::vector<std::vector<double>>& x, std::size_t k, std::uint64_t seed,
                   std::size_t max_iter) {
  const auto n = x.size();
  Rng rng(seed);
  LloydOutcome out;
  // k-means++ seeding.
  out.centroids.push_back(x[static_cast<std::size_t>(uniform_int(rng, 0, n - 1))]);
  std::vector<double> d2(n);
  while (out.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : out.centroids) best = std::min(best, sq_dist(x[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = uniform(rng, 0.0, total);
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(uniform_int(rng, 0, n - 1));
    }
    out.centroids.push_back(x[pick]);
  }

  out.labels.assign(n, 0);
  const auto dim = x.front().size();
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = sq_dist(x[i], out.centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = sq_dist(x[i], out.centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (it == 0 || out.labels[i] != best) changed = true;
      out.labels[i] = best;
    }
    out.iterations = it + 1;
    std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[out.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) next[out.labels[i]][j] += x[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        out.empty_cluster = true;
        return out;
      }
      for (auto& v : next[c]) v /= static_cast<double>(counts[c]);
    }
    out.centroids = std::move(next);
    if (!changed) break;
  }
  for (std::size_t i = 0; i < n; ++i) out.inertia += sq_dist(x[i], out.centroids[out.labels[i]]);
  return out;
}

double mean_over(const std::vector<std::size_t>& members, const std::vector<double>& values) {
  double s = 0.0;
  for (auto i : members) s += values[i];
  return s / static_cast<double>(members.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// WER tables

WerTable eval_arm(const EncoderModel& encoder, const PromptMatrix& prompts, const DecoderHead& head,
                  const std::string& arm, std::span<const EvalSet> sets) {
  WerTable out;
  for (const auto& s : sets) {
    const auto stats = evaluate_stats(encoder, prompts, head, s.utterances);
    out.push_back({arm, s.name, stats.errors.rate(), stats.errors.edits, stats.errors.ref_tokens,
                   stats.mean_loss});
  }
  return out;
}

const WerRow& find_row(const WerTable& table, const std::string& arm, const std::string& split) {
  for (const auto& r : table) {
    if (r.arm == arm && r.split == split) return r;
  }
  throw ContractError("no WER row for arm '" + arm + "' on split '" + split + "'");
}

PromptMatrix random_prompts(const PromptMatrix& prompts, std::uint64_t seed) {
  return PromptMatrix::gaussian(prompts.count(), prompts.dim(), 1.0, derive_seed(seed, {kAttackStream}));
}

WerTable attack_random_prompts(const EncoderModel& encoder, const PromptMatrix& prompts,
                               const DecoderHead& head, std::span<const EvalSet> sets,
                               std::uint64_t seed) {
  if (prompts.empty()) throw ContractError("attack: tuned prompts required (m > 0)");
  WerTable out = eval_arm(encoder, prompts, head, "tuned", sets);
  const auto rnd = eval_arm(encoder, random_prompts(prompts, seed), head, "random", sets);
  out.insert(out.end(), rnd.begin(), rnd.end());
  const PromptMatrix zeros(Tensor::zeros({prompts.count(), prompts.dim()}));
  const auto zero = eval_arm(encoder, zeros, head, "zero", sets);
  out.insert(out.end(), zero.begin(), zero.end());
  return out;
}

WerTable remove_all_prompts_eval(const EncoderModel& encoder, const PromptMatrix& prompts,
                                 const DecoderHead& head, std::span<const EvalSet> sets) {
  WerTable out = eval_arm(encoder, prompts, head, "tuned", sets);
  const auto removed = eval_arm(encoder, prompts.select({}), head, "removed", sets);
  out.insert(out.end(), removed.begin(), removed.end());
  return out;
}

// ---------------------------------------------------------------------------
// Ablation and partition

AblationReport ablate_single_prompts(const EncoderModel& encoder, const PromptMatrix& prompts,
                                     const DecoderHead& head, std::span<const EvalSet> sets) {
  const auto m = prompts.count();
  if (m < 2) throw ContractError("ablate: need at least two prompts, got " + std::to_string(m));
  AblationReport rep;
  for (const auto& s : sets) {
    rep.splits.push_back(s.name);
    const auto stats = evaluate_stats(encoder, prompts, head, s.utterances);
    rep.full_wer.push_back(stats.errors.rate());
    rep.full_loss.push_back(stats.mean_loss);
  }
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<std::size_t> active;
    for (std::size_t r = 0; r < m; ++r) {
      if (r != k) active.push_back(r);
    }
    const PromptMatrix reduced = prompts.select(active);
    AblationRow row;
    row.prompt_id = k + 1;
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const auto stats = evaluate_stats(encoder, reduced, head, sets[s].utterances);
      row.wer.push_back(stats.errors.rate());
      row.delta.push_back(stats.errors.rate() - rep.full_wer[s]);
      row.loss_delta.push_back(stats.mean_loss - rep.full_loss[s]);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void PromptPartition::validate(std::size_t m) const {
  std::vector<int> seen(m, 0);
  for (const auto* set : {&set1_content, &set2_noise}) {
    for (auto i : *set) {
      if (i >= m) throw ContractError("partition: index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw ContractError("partition: index " + std::to_string(i) + " appears twice");
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!seen[i]) throw ContractError("partition: index " + std::to_string(i) + " missing");
  }
}

KMeansResult kmeans(const std::vector<std::vector<double>>& rows, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter) {
  if (rows.empty()) throw ContractError("kmeans: no rows");
  if (k == 0 || k > rows.size()) {
    throw ContractError("kmeans: k=" + std::to_string(k) + " invalid for " + std::to_string(rows.size()) +
                        " rows");
  }
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw DimensionError("kmeans: ragged rows");
  }
  // Canonical row order.
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a] < rows[b]; });
  std::vector<std::vector<double>> sorted;
  for (auto i : order) sorted.push_back(rows[i]);

  constexpr std::size_t kMaxRestarts = 10;
  for (std::size_t attempt = 0; attempt <= kMaxRestarts; ++attempt) {
    auto run = lloyd(sorted, k, derive_seed(seed, {attempt}), max_iter);
    if (run.empty_cluster) continue;
    KMeansResult res;
    res.labels.assign(rows.size(), 0);
    for (std::size_t j = 0; j < order.size(); ++j) res.labels[order[j]] = run.labels[j];
    res.centroids = std::move(run.centroids);
    res.iterations = run.iterations;
    res.attempts = attempt + 1;
    res.inertia = run.inertia;
    return res;
  }
  throw ContractError("kmeans: empty cluster after " + std::to_string(kMaxRestarts) + " restarts");
}

PromptPartition derive_partition(const AblationReport& ablation, const PromptMatrix& prompts,
                                 std::size_t k, std::uint64_t seed, const std::string& clean_split) {
  const auto m = prompts.count();
  if (ablation.rows.size() != m) throw ContractError("partition: ablation does not match prompt count");
  const auto it = std::find(ablation.splits.begin(), ablation.splits.end(), clean_split);
  if (it == ablation.splits.end()) throw ContractError("partition: ablation lacks split " + clean_split);
  const auto s = static_cast<std::size_t>(it - ablation.splits.begin());

  PromptPartition part;
  if (k == 1) {
    part.set1_content = all_rows(m);
    return part;
  }
  const auto km = kmeans(tensor_rows(prompts.values()), k, seed);
  std::vector<double> wer_delta(m), loss_delta(m);
  for (std::size_t i = 0; i < m; ++i) {
    wer_delta[i] = ablation.rows[i].delta[s];
    loss_delta[i] = ablation.rows[i].loss_delta[s];
  }
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < m; ++i) members[km.labels[i]].push_back(i);

  std::size_t best = 0;
  for (std::size_t c = 1; c < k; ++c) {
    const double wc = mean_over(members[c], wer_delta), wb = mean_over(members[best], wer_delta);
    if (wc != wb) {
      if (wc > wb) best = c;
      continue;
    }
    const double lc = mean_over(members[c], loss_delta), lb = mean_over(members[best], loss_delta);
    if (lc != lb) {
      if (lc > lb) best = c;
      continue;
    }
    if (members[c].front() < members[best].front()) best = c;
  }
  for (std::size_t i = 0; i < m; ++i) {
    (km.labels[i] == best ? part.set1_content : part.set2_noise).push_back(i);
  }
  return part;
}

WerTable eval_prompt_subsets(const EncoderModel& encoder, const PromptMatrix& prompts,
                             const DecoderHead& head, const PromptPartition& partition,
                             std::span<const EvalSet> sets) {
  partition.validate(prompts.count());
  WerTable out = eval_arm(encoder, prompts, head, "full", sets);
  const auto a = eval_arm(encoder, prompts.select(partition.set1_content), head, "set1_only", sets);
  const auto b = eval_arm(encoder, prompts.select(partition.set2_noise), head, "set2_only", sets);
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// ---------------------------------------------------------------------------
// Projection

std::vector<std::vector<double>> tensor_rows(const Tensor& t) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < t.rows(); ++r) out.push_back(t.row(r));
  return out;
}

Projection project_rows_2d(const std::vector<std::vector<double>>& rows) {
  const auto m = rows.size();
  if (m < 3) throw ContractError("project: need at least 3 rows, got " + std::to_string(m));
  const auto d = rows.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i].size() != d) throw DimensionError("project: ragged rows");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericalError("project: eigendecomposition failed");
  const auto n = es.eigenvalues().size();
  Projection p;
  for (Eigen::Index i = n; i-- > 0;) p.eigenvalues.push_back(std::max(0.0, es.eigenvalues()(i)));
  const double top = p.eigenvalues.front();
  if (!(top > 0.0) || p.eigenvalues[1] <= 1e-12 * top) {
    throw DegenerateGeometryError("project: prompt rows span fewer than 2 dimensions");
  }
  Eigen::MatrixXd comps(static_cast<Eigen::Index>(d), 2);
  for (int c = 0; c < 2; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(n - 1 - c);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    }
    if (v(arg) < 0) v = -v;
    comps.col(c) = v;
  }
  const Eigen::MatrixXd y = x * comps;
  for (std::size_t i = 0; i < m; ++i) {
    p.coords.push_back({y(static_cast<Eigen::Index>(i), 0), y(static_cast<Eigen::Index>(i), 1)});
  }
  return p;
}

Projection project_prompts_2d(const PromptMatrix& prompts) {
  if (prompts.count() < 3) {
    throw ContractError("project: need at least 3 prompts, got " + std::to_string(prompts.count()));
  }
  return project_rows_2d(tensor_rows(prompts.values()));
}

// ---------------------------------------------------------------------------
// Probe

std::vector<double> pool_output(const LatentOutput& out, bool include_prompts) {
  const auto d = out.frames.cols();
  std::vector<double> acc(d, 0.0);
  std::size_t n = 0;
  auto add_rows = [&](const Tensor& t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) acc[c] += t.at(r, c);
    }
    n += t.rows();
  };
  add_rows(out.frames);
  if (include_prompts && out.prompts) add_rows(*out.prompts);
  for (auto& v : acc) v /= static_cast<double>(n);
  return acc;
}

PooledSet pooled_features(const EncoderModel& encoder, const PromptMatrix& prompts,
                          std::span<const Utterance> utterances, bool include_prompts) {
  NoGradScope no_grad;
  PooledSet set;
  for (const auto& u : utterances) {
    if (!u.noise) continue;
    set.features.push_back(pool_output(forward(encoder, u.mixed, prompts), include_prompts));
    set.labels.push_back(u.noise->subtype);
  }
  return set;
}

void LogisticProbe::fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  if (x.empty() || x.size() != y.size()) throw ContractError("probe: features and labels disagree");
  const std::set<int> distinct(y.begin(), y.end());
  classes_.assign(distinct.begin(), distinct.end());
  if (classes_.size() < 2) throw ContractError("probe: need at least two classes");
  const auto n = x.size(), d = x.front().size(), k = classes_.size();
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (const auto& r : x) {
    if (r.size() != d) throw DimensionError("probe: ragged features");
    for (std::size_t j = 0; j < d; ++j) mean_[j] += r[j];
  }
  for (auto& v : mean_) v /= static_cast<double>(n);
  for (const auto& r : x) {
    for (std::size_t j = 0; j < d; ++j) scale_[j] += (r[j] - mean_[j]) * (r[j] - mean_[j]);
  }
  for (auto& v : scale_) {
    v = std::sqrt(v / static_cast<double>(n));
    if (v < 1e-12) v = 1.0;
  }

  Eigen::MatrixXd xs(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (x[i][j] - mean_[j]) / scale_[j];
    }
    xs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = 1.0;
    const auto c = std::lower_bound(classes_.begin(), classes_.end(), y[i]) - classes_.begin();
    onehot(static_cast<Eigen::Index>(i), c) = 1.0;
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d + 1), static_cast<Eigen::Index>(k));
  for (std::size_t it = 0; it < options_.iterations; ++it) {
    Eigen::MatrixXd z = xs * w;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double mx = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - mx).exp();
      z.row(i) /= z.row(i).sum();
    }
    Eigen::MatrixXd grad = xs.transpose() * (z - onehot) / static_cast<double>(n);
    Eigen::MatrixXd reg = options_.l2 * w;
    reg.row(static_cast<Eigen::Index>(d)).setZero();
    w -= options_.learning_rate * (grad + reg);
  }
  weights_.assign(w.data(), w.data() + w.size());  // column-major
}

std::vector<int> LogisticProbe::predict(const std::vector<std::vector<double>>& x) const {
  if (classes_.empty()) throw ContractError("probe: predict before fit");
  const auto d = mean_.size(), k = classes_.size();
  std::vector<int> out;
  for (const auto& r : x) {
    if (r.size() != d) throw DimensionError("probe: feature width mismatch");
    std::size_t best = 0;
    double best_z = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double* col = weights_.data() + c * (d + 1);
      double z = col[d];
      for (std::size_t j = 0; j < d; ++j) z += col[j] * (r[j] - mean_[j]) / scale_[j];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    out.push_back(classes_[best]);
  }
  return out;
}

double LogisticProbe::accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const {
  if (x.empty()) throw ContractError("probe: empty evaluation set");
  const auto pred = predict(x);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
  return static_cast<double>(hit) / static_cast<double>(y.size());
}

double ProbeReport::median() const { return promptlab::median(accuracies); }

ProbeReport noise_probe(const PooledSet& pooled, const std::string& arm, double train_fraction,
                        std::size_t bootstraps, std::uint64_t seed, LogisticProbe::Options options) {
  if (std::set<int>(pooled.labels.begin(), pooled.labels.end()).size() < 2) {
    throw ContractError("probe: fewer than two noise classes present");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("probe: train fraction must be in (0,1)");
  const auto n = pooled.features.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw ContractError("probe: split leaves an empty side");
  ProbeReport rep;
  rep.arm = arm;
  for (std::size_t b = 0; b < bootstraps; ++b) {
    auto rng = make_rng(seed, {kProbeStream, b});
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
      std::swap(idx[i - 1], idx[static_cast<std::size_t>(uniform_int(rng, 0, i - 1))]);
    }
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < n; ++i) {
      auto& xs = i < n_train ? xtr : xte;
      auto& ys = i < n_train ? ytr : yte;
      xs.push_back(pooled.features[idx[i]]);
      ys.push_back(pooled.labels[idx[i]]);
    }
    LogisticProbe probe(options);
    probe.fit(xtr, ytr);
    rep.accuracies.push_back(probe.accuracy(xte, yte));
  }
  return rep;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace promptlab
