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

#include <algorithm>
#include <cmath>
#include <limits>

#include "promptlab/random.hpp"

namespace promptlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

Tensor init_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = round_to_precision(normal(rng, 0.0, stddev));
  return Tensor({r, c}, std::move(v));
}

// Row-wise log-softmax of a T x K matrix.
std::vector<double> log_softmax(const Tensor& logits) {
  const auto t_len = logits.rows(), k = logits.cols();
  const auto d = logits.data();
  std::vector<double> out(t_len * k);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = d.data() + t * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) out[t * k + j] = row[j] - lz;
  }
  return out;
}

struct Lattice {
  std::vector<int> labels;     // blank-augmented target, size S = 2U + 1
  std::vector<double> alpha;   // T x S, includes emission at t
  std::vector<double> beta;    // T x S, excludes emission at t
  double log_prob = kNegInf;
};

void check_target(const Tensor& logits, const TokenSequence& target) {
  if (logits.rank() != 2) throw DimensionError("ctc: logits must be a T x (V+1) matrix");
  if (target.empty()) throw ContractError("ctc: target must be non-empty");
  const auto blank = static_cast<int>(logits.cols() - 1);
  for (int tok : target) {
    if (tok < 0 || tok >= blank) {
      throw ContractError("ctc: token " + std::to_string(tok) + " outside vocabulary [0," +
                          std::to_string(blank) + ")");
    }
  }
  const auto need = ctc_min_frames(target);
  if (logits.rows() < need) {
    throw InfeasibleTargetError("ctc: target needs at least " + std::to_string(need) +
                                " frames but logits have " + std::to_string(logits.rows()));
  }
}

Lattice run_lattice(const std::vector<double>& logp, std::size_t t_len, std::size_t k,
                    const TokenSequence& target, bool with_beta) {
  Lattice lat;
  const int blank = static_cast<int>(k - 1);
  lat.labels.reserve(2 * target.size() + 1);
  lat.labels.push_back(blank);
  for (int tok : target) {
    lat.labels.push_back(tok);
    lat.labels.push_back(blank);
  }
  const auto s_len = lat.labels.size();
  auto emit = [&](std::size_t t, std::size_t s) {
    return logp[t * k + static_cast<std::size_t>(lat.labels[s])];
  };
  auto can_skip = [&](std::size_t s) {  // transition s-2 -> s
    return s >= 2 && lat.labels[s] != blank && lat.labels[s] != lat.labels[s - 2];
  };

  lat.alpha.assign(t_len * s_len, kNegInf);
  lat.alpha[0] = emit(0, 0);
  if (s_len > 1) lat.alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t s = 0; s < s_len; ++s) {
      double a = lat.alpha[(t - 1) * s_len + s];
      if (s >= 1) a = log_add(a, lat.alpha[(t - 1) * s_len + s - 1]);
      if (can_skip(s)) a = log_add(a, lat.alpha[(t - 1) * s_len + s - 2]);
      lat.alpha[t * s_len + s] = a == kNegInf ? kNegInf : a + emit(t, s);
    }
  }
  const auto last = (t_len - 1) * s_len;
  lat.log_prob = log_add(lat.alpha[last + s_len - 1], lat.alpha[last + s_len - 2]);

  if (with_beta) {
    lat.beta.assign(t_len * s_len, kNegInf);
    lat.beta[last + s_len - 1] = 0.0;
    lat.beta[last + s_len - 2] = 0.0;
    for (std::size_t t = t_len - 1; t-- > 0;) {
      for (std::size_t s = 0; s < s_len; ++s) {
        double b = lat.beta[(t + 1) * s_len + s] + emit(t + 1, s);
        if (s + 1 < s_len) b = log_add(b, lat.beta[(t + 1) * s_len + s + 1] + emit(t + 1, s + 1));
        if (s + 2 < s_len && can_skip(s + 2)) {
          b = log_add(b, lat.beta[(t + 1) * s_len + s + 2] + emit(t + 1, s + 2));
        }
        lat.beta[t * s_len + s] = b;
      }
    }
  }
  return lat;
}

}  // namespace

// ---------------------------------------------------------------------------
// DecoderHead

DecoderHead::DecoderHead(std::size_t d_model, std::size_t vocab, std::size_t layers,
                         std::uint64_t seed)
    : d_model_(d_model), vocab_(vocab), layers_(layers) {
  if (layers != 1 && layers != 2) throw ContractError("decoder head layers must be 1 or 2");
  if (d_model == 0 || vocab == 0) throw ContractError("decoder head needs d_model > 0 and vocab > 0");
  auto rng = make_rng(seed, {0x4845'4144});
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  if (layers == 2) {
    w_hidden_ = init_matrix(d_model, d_model, s, rng);
    b_hidden_ = Tensor::zeros({d_model});
  }
  w_out_ = init_matrix(d_model, vocab + 1, s, rng);
  b_out_ = Tensor::zeros({vocab + 1});
}

Tensor DecoderHead::logits(const Tensor& frames) const {
  Tensor h = frames;
  if (layers_ == 2) h = gelu(add(matmul(h, w_hidden_), b_hidden_));
  return add(matmul(h, w_out_), b_out_);
}

std::vector<NamedTensor> DecoderHead::named_tensors() const {
  std::vector<NamedTensor> out;
  if (layers_ == 2) {
    out.emplace_back("head.w_hidden", w_hidden_);
    out.emplace_back("head.b_hidden", b_hidden_);
  }
  out.emplace_back("head.w_out", w_out_);
  out.emplace_back("head.b_out", b_out_);
  return out;
}

std::vector<Tensor> DecoderHead::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

std::size_t DecoderHead::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

void DecoderHead::set_trainable(bool on) {
  for (auto& t : parameters()) t.set_trainable(on);
}

DecoderHead DecoderHead::clone() const {
  DecoderHead h = *this;
  h.w_out_ = w_out_.clone();
  h.b_out_ = b_out_.clone();
  if (layers_ == 2) {
    h.w_hidden_ = w_hidden_.clone();
    h.b_hidden_ = b_hidden_.clone();
  }
  return h;
}

DecoderHead DecoderHead::from_tensors(std::size_t d_model, std::size_t vocab, std::size_t layers,
                                      const std::vector<NamedTensor>& tensors) {
  DecoderHead h;
  h.d_model_ = d_model;
  h.vocab_ = vocab;
  h.layers_ = layers;
  auto get = [&](const std::string& name, const Shape& shape) {
    for (const auto& [n, t] : tensors) {
      if (n == name) {
        if (t.shape() != shape) {
          throw DimensionError(name + ": expected " + shape_string(shape) + ", got " +
                               shape_string(t.shape()));
        }
        return t;
      }
    }
    throw ContractError("decoder head tensor '" + name + "' missing");
  };
  if (layers == 2) {
    h.w_hidden_ = get("head.w_hidden", {d_model, d_model});
    h.b_hidden_ = get("head.b_hidden", {d_model});
  }
  h.w_out_ = get("head.w_out", {d_model, vocab + 1});
  h.b_out_ = get("head.b_out", {vocab + 1});
  return h;
}

// ---------------------------------------------------------------------------
// CTC

std::size_t ctc_min_frames(const TokenSequence& target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

double ctc_log_likelihood(const Tensor& logits, const TokenSequence& target) {
  check_target(logits, target);
  const auto logp = log_softmax(logits);
  return run_lattice(logp, logits.rows(), logits.cols(), target, false).log_prob;
}

Tensor ctc_loss(const Tensor& logits, const TokenSequence& target) {
  check_target(logits, target);
  const auto t_len = logits.rows(), k = logits.cols();
  auto logp = log_softmax(logits);
  const bool rec = should_record({&logits});
  Lattice lat = run_lattice(logp, t_len, k, target, rec);
  if (!std::isfinite(lat.log_prob)) throw NumericalError("ctc: target has zero probability");
  Tensor out = make_result({1}, {-lat.log_prob}, rec);
  if (rec) {
    active_tape()->record(
        {logits}, out,
        [logits, logp = std::move(logp), lat = std::move(lat), t_len, k](GradTape& tape,
                                                                          const Grad& g) {
          // d(-log p)/du_{t,k} = y_{t,k} - sum over lattice states labelled k of
          // alpha_t(s) beta_t(s) / p.
          const auto s_len = lat.labels.size();
          auto& gl = tape.accumulator(logits);
          std::vector<double> occ(k);
          for (std::size_t t = 0; t < t_len; ++t) {
            std::fill(occ.begin(), occ.end(), kNegInf);
            for (std::size_t s = 0; s < s_len; ++s) {
              const double v = lat.alpha[t * s_len + s] + lat.beta[t * s_len + s];
              auto& o = occ[static_cast<std::size_t>(lat.labels[s])];
              o = log_add(o, v);
            }
            for (std::size_t j = 0; j < k; ++j) {
              const double y = std::exp(logp[t * k + j]);
              const double gamma = occ[j] == kNegInf ? 0.0 : std::exp(occ[j] - lat.log_prob);
              gl[t * k + j] += g[0] * (y - gamma);
            }
          }
        });
  }
  return out;
}

TokenSequence greedy_decode(const Tensor& logits) {
  if (logits.rank() != 2) throw DimensionError("greedy_decode: logits must be a matrix");
  const auto t_len = logits.rows(), k = logits.cols();
  const int blank = static_cast<int>(k - 1);
  const auto d = logits.data();
  TokenSequence out;
  int prev = -1;
  for (std::size_t t = 0; t < t_len; ++t) {
    const double* row = d.data() + t * k;
    const int best = static_cast<int>(std::max_element(row, row + k) - row);
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::size_t edit_distance(const TokenSequence& ref, const TokenSequence& hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer(const TokenSequence& ref, const TokenSequence& hyp) {
  if (ref.empty()) throw ContractError("wer: reference must be non-empty");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

void ErrorCounts::add(const TokenSequence& ref, const TokenSequence& hyp) {
  edits += edit_distance(ref, hyp);
  ref_tokens += ref.size();
}

double ErrorCounts::rate() const {
  if (ref_tokens == 0) throw ContractError("wer: no reference tokens accumulated");
  return static_cast<double>(edits) / static_cast<double>(ref_tokens);
}

}  // namespace promptlab
