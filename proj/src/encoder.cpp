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

#include "promptlab/encoder.hpp"

#include <cmath>

#include "promptlab/checkpoint.hpp"
#include "promptlab/random.hpp"

namespace promptlab {

namespace {

Tensor init_matrix(std::size_t r, std::size_t c, double stddev, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = round_to_precision(normal(rng, 0.0, stddev));
  return Tensor({r, c}, std::move(v));
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers == 0 || d_model == 0 || heads == 0 || ffn == 0 || feature_dim == 0) {
    throw ContractError("encoder dimensions must be positive");
  }
  if (d_model % heads != 0) {
    throw ContractError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                        std::to_string(heads) + ")");
  }
}

EncoderModel::EncoderModel(EncoderConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  auto rng = make_rng(seed, {0x454e'4344});
  const auto d = config_.d_model;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  embed_w_ = init_matrix(config_.feature_dim, d,
                         1.0 / std::sqrt(static_cast<double>(config_.feature_dim)), rng);
  embed_b_ = Tensor::zeros({d});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    EncoderLayer layer;
    layer.ln1_gamma = Tensor::full({d}, 1.0);
    layer.ln1_beta = Tensor::zeros({d});
    layer.w_q = init_matrix(d, d, sd, rng);
    layer.w_k = init_matrix(d, d, sd, rng);
    layer.w_v = init_matrix(d, d, sd, rng);
    layer.w_o = init_matrix(d, d, sd / std::sqrt(2.0 * static_cast<double>(config_.layers)), rng);
    layer.ln2_gamma = Tensor::full({d}, 1.0);
    layer.ln2_beta = Tensor::zeros({d});
    layer.w_ff1 = init_matrix(d, config_.ffn, sd, rng);
    layer.b_ff1 = Tensor::zeros({config_.ffn});
    layer.w_ff2 = init_matrix(config_.ffn, d,
                              1.0 / std::sqrt(2.0 * static_cast<double>(config_.ffn * config_.layers)),
                              rng);
    layer.b_ff2 = Tensor::zeros({d});
    layers_.push_back(std::move(layer));
  }
  final_gamma_ = Tensor::full({d}, 1.0);
  final_beta_ = Tensor::zeros({d});
  for (auto& t : parameters()) t.set_trainable(true);
}

std::vector<NamedTensor> EncoderModel::named_tensors() const {
  std::vector<NamedTensor> out;
  out.emplace_back("encoder.embed.w", embed_w_);
  out.emplace_back("encoder.embed.b", embed_b_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto p = "encoder.layer" + std::to_string(l) + ".";
    const auto& L = layers_[l];
    out.emplace_back(p + "ln1.gamma", L.ln1_gamma);
    out.emplace_back(p + "ln1.beta", L.ln1_beta);
    out.emplace_back(p + "attn.w_q", L.w_q);
    out.emplace_back(p + "attn.w_k", L.w_k);
    out.emplace_back(p + "attn.w_v", L.w_v);
    out.emplace_back(p + "attn.w_o", L.w_o);
    out.emplace_back(p + "ln2.gamma", L.ln2_gamma);
    out.emplace_back(p + "ln2.beta", L.ln2_beta);
    out.emplace_back(p + "ffn.w1", L.w_ff1);
    out.emplace_back(p + "ffn.b1", L.b_ff1);
    out.emplace_back(p + "ffn.w2", L.w_ff2);
    out.emplace_back(p + "ffn.b2", L.b_ff2);
  }
  out.emplace_back("encoder.final.gamma", final_gamma_);
  out.emplace_back("encoder.final.beta", final_beta_);
  return out;
}

std::vector<Tensor> EncoderModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_tensors()) out.push_back(t);
  return out;
}

std::size_t EncoderModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

void EncoderModel::freeze() {
  for (auto& t : parameters()) t.set_trainable(false);
  frozen_ = true;
}

std::string EncoderModel::content_hash() const { return hash_tensors(named_tensors()); }

EncoderModel EncoderModel::from_tensors(EncoderConfig config, const std::vector<NamedTensor>& tensors,
                                        bool frozen) {
  config.validate();
  EncoderModel m;
  m.config_ = config;
  const auto d = config.d_model;
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
    throw ContractError("encoder tensor '" + name + "' missing");
  };
  m.embed_w_ = get("encoder.embed.w", {config.feature_dim, d});
  m.embed_b_ = get("encoder.embed.b", {d});
  for (std::size_t l = 0; l < config.layers; ++l) {
    const auto p = "encoder.layer" + std::to_string(l) + ".";
    EncoderLayer L;
    L.ln1_gamma = get(p + "ln1.gamma", {d});
    L.ln1_beta = get(p + "ln1.beta", {d});
    L.w_q = get(p + "attn.w_q", {d, d});
    L.w_k = get(p + "attn.w_k", {d, d});
    L.w_v = get(p + "attn.w_v", {d, d});
    L.w_o = get(p + "attn.w_o", {d, d});
    L.ln2_gamma = get(p + "ln2.gamma", {d});
    L.ln2_beta = get(p + "ln2.beta", {d});
    L.w_ff1 = get(p + "ffn.w1", {d, config.ffn});
    L.b_ff1 = get(p + "ffn.b1", {config.ffn});
    L.w_ff2 = get(p + "ffn.w2", {config.ffn, d});
    L.b_ff2 = get(p + "ffn.b2", {d});
    m.layers_.push_back(std::move(L));
  }
  m.final_gamma_ = get("encoder.final.gamma", {d});
  m.final_beta_ = get("encoder.final.beta", {d});
  for (auto& t : m.parameters()) t.set_trainable(!frozen);
  m.frozen_ = frozen;
  return m;
}

// ---------------------------------------------------------------------------
// PromptMatrix

PromptMatrix::PromptMatrix(Tensor values) : dim_(values.cols()) {
  if (values.rank() != 2) throw DimensionError("prompt matrix must be m x d");
  values_ = std::move(values);
}

PromptMatrix PromptMatrix::gaussian(std::size_t count, std::size_t dim, double stddev,
                                    std::uint64_t seed) {
  if (count == 0) return PromptMatrix(dim);
  auto rng = make_rng(seed, {0x5052'4f4d});
  std::vector<double> v(count * dim);
  for (auto& x : v) x = round_to_precision(normal(rng, 0.0, stddev));
  return PromptMatrix(Tensor({count, dim}, std::move(v)));
}

const Tensor& PromptMatrix::values() const {
  if (!values_) throw ContractError("prompt matrix is empty");
  return *values_;
}

Tensor& PromptMatrix::values() {
  if (!values_) throw ContractError("prompt matrix is empty");
  return *values_;
}

void PromptMatrix::set_trainable(bool on) {
  if (values_) values_->set_trainable(on);
}

PromptMatrix PromptMatrix::select(std::span<const std::size_t> rows) const {
  if (rows.empty()) return PromptMatrix(dim_);
  const auto m = count();
  std::vector<double> v;
  v.reserve(rows.size() * dim_);
  for (auto r : rows) {
    if (r >= m) {
      throw ContractError("prompt index " + std::to_string(r) + " out of range for m=" +
                          std::to_string(m));
    }
    const auto src = values_->data().subspan(r * dim_, dim_);
    v.insert(v.end(), src.begin(), src.end());
  }
  return PromptMatrix(Tensor({rows.size(), dim_}, std::move(v)));
}

PromptMatrix PromptMatrix::clone() const {
  if (!values_) return PromptMatrix(dim_);
  return PromptMatrix(values_->clone());
}

// ---------------------------------------------------------------------------
// Forward computation

Tensor sinusoidal_positions(std::size_t count, std::size_t dim) {
  std::vector<double> v(count * dim);
  for (std::size_t t = 0; t < count; ++t) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      v[t * dim + i] = std::sin(static_cast<double>(t) * freq);
      if (i + 1 < dim) v[t * dim + i + 1] = std::cos(static_cast<double>(t) * freq);
    }
  }
  for (auto& x : v) x = round_to_precision(x);
  return Tensor({count, dim}, std::move(v));
}

Tensor embed(const EncoderModel& model, const Tensor& features) {
  const auto& cfg = model.config();
  if (features.rank() != 2 || features.cols() != cfg.feature_dim) {
    throw DimensionError("embed: features " + shape_string(features.shape()) +
                         " do not match feature dim " + std::to_string(cfg.feature_dim));
  }
  Tensor x = add(matmul(features, model.embed_w()), model.embed_b());
  return add(x, sinusoidal_positions(features.rows(), cfg.d_model));
}

Tensor prepend_prompts(const Tensor& x, const PromptMatrix& prompts) {
  if (prompts.empty()) {
    if (prompts.dim() != 0 && prompts.dim() != x.cols()) {
      throw ContractError("prepend_prompts: prompt width " + std::to_string(prompts.dim()) +
                          " differs from input width " + std::to_string(x.cols()));
    }
    return x;
  }
  if (prompts.dim() != x.cols()) {
    throw ContractError("prepend_prompts: prompt width " + std::to_string(prompts.dim()) +
                        " differs from input width " + std::to_string(x.cols()));
  }
  return concat_rows({prompts.values(), x});
}

Tensor strip_prompts(const Tensor& xp, std::size_t m) {
  if (m == 0) return xp;
  return slice_rows(xp, m, xp.rows());
}

Tensor multi_head_attention(const Tensor& z, const EncoderLayer& layer, std::size_t heads,
                            std::vector<Tensor>* attention) {
  const auto d = z.cols();
  if (heads == 0 || d % heads != 0) throw ContractError("attention: heads must divide d");
  const auto dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor q = matmul(z, layer.w_q);
  const Tensor k = matmul(z, layer.w_k);
  const Tensor v = matmul(z, layer.w_v);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    const Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
    if (attention) attention->push_back(weights);
    outs.push_back(matmul(weights, vh));
  }
  const Tensor cat = heads == 1 ? outs.front() : concat_cols(outs);
  return matmul(cat, layer.w_o);
}

Tensor attention_layer(const Tensor& xp, const EncoderLayer& layer, std::size_t heads,
                       std::vector<Tensor>* attention) {
  const Tensor z = layer_norm(xp, layer.ln1_gamma, layer.ln1_beta);
  return add(xp, multi_head_attention(z, layer, heads, attention));
}

Tensor feed_forward_layer(const Tensor& h, const EncoderLayer& layer) {
  const Tensor z = layer_norm(h, layer.ln2_gamma, layer.ln2_beta);
  const Tensor hidden = gelu(add(matmul(z, layer.w_ff1), layer.b_ff1));
  return add(h, add(matmul(hidden, layer.w_ff2), layer.b_ff2));
}

LatentOutput forward(const EncoderModel& model, const Tensor& features, const PromptMatrix& prompts,
                     const ForwardOptions& options) {
  if (model.layers().empty()) throw ContractError("forward: model not loaded");
  if (features.rank() != 2 || features.rows() == 0) {
    throw ContractError("forward: utterance must have at least one frame");
  }
  const auto& cfg = model.config();
  if (!prompts.empty() && prompts.dim() != cfg.d_model) {
    throw ContractError("forward: prompt width " + std::to_string(prompts.dim()) +
                        " differs from model width " + std::to_string(cfg.d_model));
  }
  const auto m = prompts.count();
  LatentOutput out;
  Tensor h = prepend_prompts(embed(model, features), prompts);
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    std::vector<Tensor>* maps = nullptr;
    if (options.keep_attention) maps = &out.attention.emplace_back();
    try {
      h = attention_layer(h, model.layers()[l], cfg.heads, maps);
      h = feed_forward_layer(h, model.layers()[l]);
    } catch (const NumericalError& e) {
      throw NumericalError("encoder layer " + std::to_string(l) + ": " + e.what());
    }
  }
  h = layer_norm(h, model.final_gamma(), model.final_beta());
  out.frames = strip_prompts(h, m);
  if (m > 0) out.prompts = slice_rows(h, 0, m);
  return out;
}

LatentOutput forward_masked(const EncoderModel& model, const Tensor& features,
                            const PromptMatrix& prompts, std::span<const std::size_t> active,
                            const ForwardOptions& options) {
  return forward(model, features, prompts.select(active), options);
}

}  // namespace promptlab
