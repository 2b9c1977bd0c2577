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

#include "promptlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "promptlab/random.hpp"

namespace promptlab {

namespace {

using json = nlohmann::ordered_json;

// Stream tags for derive_seed.
constexpr std::uint64_t kPromptInitStream = 1;
constexpr std::uint64_t kHeadInitStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kEncoderInitStream = 4;

// Epoch-shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw ContractError("cannot sample batches from an empty split");
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    // Fisher-Yates with our own draws so the order is library-independent.
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(rng_, 0, i - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

std::span<const Utterance> head_span(std::span<const Utterance> all, std::size_t n) {
  return all.subspan(0, std::min(n, all.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// RunRecord

std::string RunRecord::to_jsonl() const {
  std::string out;
  json header = {{"record", "run"},        {"stage", stage},
                 {"optimizer", optimizer}, {"seed", seed},
                 {"prompts", prompts},     {"checkpoint", checkpoint},
                 {"encoder_hash_before", encoder_hash_before},
                 {"encoder_hash_after", encoder_hash_after},
                 {"config", config_text}};
  out += header.dump() + "\n";
  for (const auto& p : curve) {
    json j = {{"record", "step"}, {"step", p.step}, {"loss", p.loss}, {"lr", p.lr},
              {"grad_norm", p.grad_norm}};
    out += j.dump() + "\n";
  }
  for (const auto& e : evals) {
    json j = {{"record", "eval"}, {"step", e.step}, {"split", e.split}, {"wer", e.wer}};
    out += j.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(OptimizerConfig config, std::vector<Tensor> params)
    : config_(std::move(config)), params_(std::move(params)) {
  if (config_.kind != "adam" && config_.kind != "momentum") {
    throw ContractError("optimizer: unknown kind '" + config_.kind + "'");
  }
  if (!(config_.lr > 0)) throw ContractError("optimizer: learning rate must be positive");
  for (const auto& p : params_) {
    if (!p.trainable()) throw ContractError("optimizer: refusing to register a frozen tensor");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(config_.kind == "adam" ? p.numel() : 0, 0.0);
  }
}

double Optimizer::current_lr() const {
  if (config_.warmup == 0) return config_.lr;
  const double frac = static_cast<double>(t_ + 1) / static_cast<double>(config_.warmup);
  return config_.lr * std::min(1.0, frac);
}

double Optimizer::step(const GradientMap& grads) {
  if (!grad_enabled()) throw ContractError("optimizer: step attempted while gradients are disabled");
  for (const auto& p : params_) {
    if (!p.trainable()) throw ContractError("optimizer: parameter was frozen after registration");
  }
  double sq = 0.0;
  for (const auto& p : params_) {
    if (const Grad* g = grads.find(p)) {
      for (double x : *g) sq += x * x;
    }
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("optimizer: non-finite gradient norm");
  const double clip = (config_.grad_clip > 0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;
  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Grad* g = grads.find(params_[k]);
    if (!g) continue;
    auto w = params_[k].mutable_data();
    auto& m = m_[k];
    if (config_.kind == "adam") {
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = (*g)[i] * clip;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
        const double upd = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
        w[i] = round_to_precision(w[i] - upd);
      }
    } else {
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = config_.momentum * m[i] + (*g)[i] * clip;
        w[i] = round_to_precision(w[i] - lr * m[i]);
      }
    }
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Loss and evaluation

double batch_gradient(const EncoderModel& encoder, const PromptMatrix& prompts,
                      const DecoderHead& head, std::span<const Utterance* const> batch,
                      bool use_clean, GradientMap& grads) {
  if (batch.empty()) throw ContractError("batch_gradient: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const Utterance* u : batch) {
    GradTape tape;
    TapeScope scope(tape);
    const auto out = forward(encoder, use_clean ? u->clean : u->mixed, prompts);
    const Tensor loss = ctc_loss(head.logits(out.frames), u->tokens);
    total += loss.item();
    grads.accumulate(tape.backward(loss), inv);
  }
  return total * inv;
}

ErrorCounts evaluate_errors(const EncoderModel& encoder, const PromptMatrix& prompts,
                            const DecoderHead& head, std::span<const Utterance> utterances,
                            bool use_clean) {
  NoGradScope no_grad;
  ErrorCounts counts;
  for (const auto& u : utterances) {
    const auto out = forward(encoder, use_clean ? u.clean : u.mixed, prompts);
    counts.add(u.tokens, greedy_decode(head.logits(out.frames)));
  }
  return counts;
}

EvalStats evaluate_stats(const EncoderModel& encoder, const PromptMatrix& prompts,
                         const DecoderHead& head, std::span<const Utterance> utterances,
                         bool use_clean) {
  NoGradScope no_grad;
  EvalStats stats;
  double loss = 0.0;
  for (const auto& u : utterances) {
    const auto out = forward(encoder, use_clean ? u.clean : u.mixed, prompts);
    const Tensor logits = head.logits(out.frames);
    stats.errors.add(u.tokens, greedy_decode(logits));
    loss -= ctc_log_likelihood(logits, u.tokens);
  }
  if (!utterances.empty()) stats.mean_loss = loss / static_cast<double>(utterances.size());
  return stats;
}

double evaluate_wer(const EncoderModel& encoder, const PromptMatrix& prompts,
                    const DecoderHead& head, std::span<const Utterance> utterances,
                    bool use_clean) {
  return evaluate_errors(encoder, prompts, head, utterances, use_clean).rate();
}

// ---------------------------------------------------------------------------
// Pretraining

PretrainResult pretrain_backbone(const Corpus& corpus, const ExperimentConfig& cfg) {
  cfg.validate();
  EncoderModel encoder(cfg.encoder, derive_seed(cfg.seed, {kEncoderInitStream}));
  DecoderHead head(cfg.encoder.d_model, cfg.synth.vocab, 1, derive_seed(cfg.seed, {kHeadInitStream, 0}));
  head.set_trainable(true);
  const PromptMatrix none(cfg.encoder.d_model);

  auto params = encoder.parameters();
  for (const auto& p : head.parameters()) params.push_back(p);
  Optimizer opt({.kind = "adam", .lr = cfg.pretrain_lr, .warmup = cfg.pretrain_warmup,
                 .grad_clip = cfg.grad_clip},
                std::move(params));

  RunRecord rec;
  rec.stage = "pretrain";
  rec.optimizer = "adam";
  rec.seed = cfg.seed;
  rec.config_text = cfg.to_text();

  const auto& train = corpus.train;
  const auto dev = head_span(corpus.dev_clean, cfg.eval_subset);
  BatchSampler sampler(train.size(), derive_seed(cfg.seed, {kBatchStream, 0}));
  for (std::size_t step = 0; step < cfg.pretrain_steps; ++step) {
    std::vector<const Utterance*> batch;
    for (auto i : sampler.next(cfg.pretrain_batch)) batch.push_back(&train[i]);
    GradientMap grads;
    double loss = 0.0;
    try {
      loss = batch_gradient(encoder, none, head, batch, /*use_clean=*/true, grads);
    } catch (const NumericalError& e) {
      throw TrainingFailure("pretrain: numerical failure at step " + std::to_string(step) + ": " + e.what(),
                            step, rec.curve);
    }
    const double lr = opt.current_lr();
    const double gn = opt.step(grads);
    rec.curve.push_back({step, loss, lr, gn});
    if ((step + 1) % cfg.eval_interval == 0 && step + 1 < cfg.pretrain_steps) {
      rec.evals.push_back({step + 1, "dev_clean", evaluate_wer(encoder, none, head, dev)});
    }
  }
  const double final_wer = evaluate_wer(encoder, none, head, corpus.dev_clean);
  rec.evals.push_back({cfg.pretrain_steps, "dev_clean", final_wer});
  if (final_wer > cfg.pretrain_wer_threshold) {
    throw TrainingFailure("pretrain: dev-clean WER " + std::to_string(final_wer) + " above threshold " +
                              std::to_string(cfg.pretrain_wer_threshold) + " after " +
                              std::to_string(cfg.pretrain_steps) + " steps",
                          cfg.pretrain_steps, rec.curve);
  }
  encoder.freeze();
  rec.encoder_hash_before = rec.encoder_hash_after = encoder.content_hash();
  return {std::move(encoder), std::move(rec), final_wer};
}

// ---------------------------------------------------------------------------
// Prompt tuning

TuneOptions tune_options(const ExperimentConfig& cfg, std::size_t prompts, std::uint64_t seed) {
  TuneOptions o;
  o.prompts = prompts;
  o.vocab = cfg.synth.vocab;
  o.lr = cfg.lr;
  o.steps = cfg.steps;
  o.batch = cfg.batch;
  o.warmup = cfg.warmup;
  o.optimizer = cfg.optimizer;
  o.grad_clip = cfg.grad_clip;
  o.head_layers = cfg.head_layers;
  o.eval_interval = cfg.eval_interval;
  o.eval_subset = cfg.eval_subset;
  o.init_stats_utterances = cfg.init_stats_utterances;
  o.seed = seed;
  return o;
}

std::vector<double> embedding_std(const EncoderModel& encoder, std::span<const Utterance> utterances,
                                  std::size_t n) {
  NoGradScope no_grad;
  const auto d = encoder.config().d_model;
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  std::size_t rows = 0;
  for (const auto& u : head_span(utterances, n)) {
    const Tensor e = embed(encoder, u.clean);
    for (std::size_t r = 0; r < e.rows(); ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        const double x = e.at(r, c);
        sum[c] += x;
        sq[c] += x * x;
      }
    }
    rows += e.rows();
  }
  if (rows < 2) throw ContractError("embedding_std: need at least two frames");
  std::vector<double> out(d);
  for (std::size_t c = 0; c < d; ++c) {
    const double mean = sum[c] / static_cast<double>(rows);
    out[c] = std::sqrt(std::max(0.0, sq[c] / static_cast<double>(rows) - mean * mean));
  }
  return out;
}

TuneResult prompt_tune(const EncoderModel& encoder, const Corpus& corpus, const TuneOptions& options) {
  if (!encoder.frozen()) throw ContractError("prompt_tune: encoder must be frozen");
  if (options.batch == 0 || options.eval_interval == 0) {
    throw ContractError("prompt_tune: batch and eval_interval must be positive");
  }
  const auto d = encoder.config().d_model;
  const std::string hash_before = encoder.content_hash();

  PromptMatrix prompts(d);
  if (options.prompts > 0) {
    const auto stdev = embedding_std(encoder, corpus.train, options.init_stats_utterances);
    auto rng = make_rng(options.seed, {kPromptInitStream});
    std::vector<double> v(options.prompts * d);
    for (std::size_t r = 0; r < options.prompts; ++r) {
      for (std::size_t c = 0; c < d; ++c) v[r * d + c] = round_to_precision(normal(rng, 0.0, stdev[c]));
    }
    prompts = PromptMatrix(Tensor({options.prompts, d}, std::move(v)));
    prompts.set_trainable(true);
  }
  DecoderHead head(d, options.vocab, options.head_layers, derive_seed(options.seed, {kHeadInitStream}));
  head.set_trainable(true);

  std::vector<Tensor> params;
  if (!prompts.empty()) params.push_back(prompts.values());
  for (const auto& p : head.parameters()) params.push_back(p);
  Optimizer opt({.kind = options.optimizer, .lr = options.lr, .warmup = options.warmup,
                 .grad_clip = options.grad_clip},
                std::move(params));

  RunRecord rec;
  rec.stage = "prompt-tune";
  rec.optimizer = options.optimizer;
  rec.seed = options.seed;
  rec.prompts = options.prompts;
  rec.encoder_hash_before = hash_before;

  const auto& train = corpus.train;
  const auto dev = head_span(corpus.dev_noisy, options.eval_subset);
  BatchSampler sampler(train.size(), derive_seed(options.seed, {kBatchStream}));
  for (std::size_t step = 0; step < options.steps; ++step) {
    std::vector<const Utterance*> batch;
    for (auto i : sampler.next(options.batch)) batch.push_back(&train[i]);
    GradientMap grads;
    double loss = 0.0;
    try {
      loss = batch_gradient(encoder, prompts, head, batch, /*use_clean=*/false, grads);
      if (!std::isfinite(loss)) throw NumericalError("non-finite loss");
    } catch (const NumericalError& e) {
      throw TrainingFailure("prompt-tune: numerical failure at step " + std::to_string(step) + ": " +
                                e.what(),
                            step, rec.curve);
    }
    const double lr = opt.current_lr();
    const double gn = opt.step(grads);
    rec.curve.push_back({step, loss, lr, gn});
    if ((step + 1) % options.eval_interval == 0 || step + 1 == options.steps) {
      rec.evals.push_back({step + 1, "dev_noisy", evaluate_wer(encoder, prompts, head, dev)});
    }
  }
  rec.encoder_hash_after = encoder.content_hash();
  if (rec.encoder_hash_after != hash_before) {
    throw ContractError("prompt_tune: encoder weights changed during tuning");
  }
  return {std::move(prompts), std::move(head), std::move(rec)};
}

GridResult grid_search_lr(const EncoderModel& encoder, const Corpus& corpus,
                          std::vector<double> candidates, const TuneOptions& options) {
  if (candidates.empty()) throw ContractError("grid_search_lr: no candidates");
  GridResult result;
  if (candidates.size() == 1) {
    result.best_lr = candidates.front();
    return result;
  }
  std::sort(candidates.begin(), candidates.end());
  double best = 0.0;
  for (double lr : candidates) {
    TuneOptions o = options;
    o.lr = lr;
    const auto tuned = prompt_tune(encoder, corpus, o);
    const double w = evaluate_wer(encoder, tuned.prompts, tuned.head, corpus.dev_clean);
    result.dev_clean_wer.emplace_back(lr, w);
    // Strict comparison over ascending lr keeps the smaller lr on ties.
    if (result.dev_clean_wer.size() == 1 || w < best) {
      best = w;
      result.best_lr = lr;
    }
  }
  return result;
}

}  // namespace promptlab
