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

#include "promptlab/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numbers>
#include <sstream>

namespace promptlab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

std::atomic<Precision> g_precision{Precision::kF32};
thread_local GradTape* t_tape = nullptr;
thread_local bool t_grad_enabled = true;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

ConstMap as_matrix(const Grad& g, std::size_t r, std::size_t c) {
  return ConstMap(g.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap as_matrix(Grad& g, std::size_t r, std::size_t c) {
  return MutMap(g.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

// b broadcasts over a's rows when it is a row vector of a's width.
bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return false;
  if (a.rank() != 2) return false;
  const bool row_vec = (b.rank() == 1 && b.shape()[0] == a.cols()) ||
                       (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == a.cols());
  return row_vec;
}

void record(std::vector<Tensor> inputs, const Tensor& out, GradTape::BackwardFn fn) {
  if (out.requires_grad()) t_tape->record(std::move(inputs), out, std::move(fn));
}

}  // namespace

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

std::string to_string(Precision p) { return p == Precision::kF32 ? "f32" : "f64"; }

Precision parse_precision(const std::string& s) {
  if (s == "f32" || s == "32") return Precision::kF32;
  if (s == "f64" || s == "64") return Precision::kF64;
  throw ContractError("unknown precision '" + s + "' (expected f32 or f64)");
}

double round_to_precision(double v) {
  if (precision() == Precision::kF32) return static_cast<double>(static_cast<float>(v));
  return v;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : s_(std::make_shared<TensorStorage>()) {
  s_->shape = {1};
  s_->data = {0.0};
}

Tensor::Tensor(Shape shape, std::vector<double> data) : s_(std::make_shared<TensorStorage>()) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value in tensor construction");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(data);
}

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw DimensionError("from_rows: empty input");
  const auto c = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), c}, std::move(data));
}

std::size_t Tensor::rows() const { return rank() == 1 ? 1 : s_->shape[0]; }

std::size_t Tensor::cols() const { return s_->shape.back(); }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_string(shape()));
  return s_->data[0];
}

std::vector<double> Tensor::row(std::size_t r) const {
  const auto c = cols();
  return {s_->data.begin() + static_cast<std::ptrdiff_t>(r * c),
          s_->data.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)};
}

void Tensor::set_trainable(bool on) {
  s_->trainable = on;
  s_->requires_grad = on;
}

Tensor Tensor::clone() const {
  Tensor t;
  t.s_->shape = s_->shape;
  t.s_->data = s_->data;
  return t;
}

bool Tensor::same_values(const Tensor& other) const {
  return shape() == other.shape() && s_->data == other.s_->data;
}

// ---------------------------------------------------------------------------
// Gradients and tape

const Grad* GradientMap::find(const Tensor& t) const {
  auto it = grads_.find(t.id());
  return it == grads_.end() ? nullptr : &it->second;
}

Grad& GradientMap::operator[](const Tensor& t) {
  auto& g = grads_[t.id()];
  if (g.empty()) g.assign(t.numel(), 0.0);
  return g;
}

void GradientMap::accumulate(const GradientMap& other, double factor) {
  for (const auto& [key, g] : other.grads_) {
    auto& dst = grads_[key];
    if (dst.empty()) dst.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  }
}

void GradientMap::scale(double factor) {
  for (auto& [key, g] : grads_) {
    for (auto& v : g) v *= factor;
  }
}

double GradientMap::global_norm() const {
  double s = 0.0;
  for (const auto& [key, g] : grads_) {
    for (double v : g) s += v * v;
  }
  return std::sqrt(s);
}

void GradTape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  if (swept_) throw ContractError("tape already swept; start a new tape");
  nodes_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

Grad& GradTape::accumulator(const Tensor& t) {
  auto& g = accum_[t.id()];
  if (g.empty()) g.assign(t.numel(), 0.0);
  return g;
}

GradientMap GradTape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got " + shape_string(loss.shape()));
  }
  if (swept_) throw ContractError("backward: tape already swept");
  swept_ = true;
  visited_ = 0;
  GradientMap out;
  if (!loss.requires_grad()) return out;

  accumulator(loss)[0] = 1.0;
  // Nodes were appended in creation order, so the reverse is a valid
  // reverse topological order.
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = accum_.find(it->output.id());
    if (found == accum_.end()) continue;
    const Grad out_grad = std::move(found->second);
    accum_.erase(found);
    ++visited_;
    it->backward(*this, out_grad);
  }
  // Whatever is left in the accumulators belongs to leaves.
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (!in.trainable()) continue;
      auto found = accum_.find(in.id());
      if (found == accum_.end()) continue;
      out[in] = std::move(found->second);
      accum_.erase(found);
    }
  }
  if (loss.trainable()) {
    auto found = accum_.find(loss.id());
    if (found != accum_.end()) out[loss] = std::move(found->second);
  }
  accum_.clear();
  nodes_.clear();
  return out;
}

TapeScope::TapeScope(GradTape& tape) : saved_(t_tape) { t_tape = &tape; }
TapeScope::~TapeScope() { t_tape = saved_; }

NoGradScope::NoGradScope() : saved_tape_(t_tape), saved_enabled_(t_grad_enabled) {
  t_tape = nullptr;
  t_grad_enabled = false;
}

NoGradScope::~NoGradScope() {
  t_tape = saved_tape_;
  t_grad_enabled = saved_enabled_;
}

GradTape* active_tape() { return t_tape; }
bool grad_enabled() { return t_grad_enabled; }

bool should_record(std::initializer_list<const Tensor*> operands) {
  if (t_tape == nullptr) return false;
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool should_record(std::span<const Tensor> operands) {
  if (t_tape == nullptr) return false;
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

Tensor make_result(Shape shape, std::vector<double> data, bool record_grad) {
  if (precision() == Precision::kF32) {
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
  // Exponent-field test instead of std::isfinite so the loop vectorizes.
  std::uint64_t bad = 0;
  for (double v : data) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    bad |= static_cast<std::uint64_t>((bits & 0x7ff0000000000000ULL) == 0x7ff0000000000000ULL);
  }
  if (bad) throw NumericalError("non-finite value produced by tensor operation");
  Tensor out;
  out.s_->shape = std::move(shape);
  out.s_->data = std::move(data);
  out.s_->requires_grad = record_grad;
  return out;
}

namespace {

void add_into(Grad& dst, const Grad& src, double factor = 1.0) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += factor * src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  const auto r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<double> data(r * c);
  as_matrix(data, r, c).noalias() = as_matrix(a) * as_matrix(b);
  Tensor out = make_result({r, c}, std::move(data), should_record({&a, &b}));
  record({a, b}, out, [a, b, r, k, c](GradTape& tape, const Grad& g) {
    auto G = as_matrix(g, r, c);
    if (a.requires_grad()) as_matrix(tape.accumulator(a), r, k).noalias() += G * as_matrix(b).transpose();
    if (b.requires_grad()) as_matrix(tape.accumulator(b), k, c).noalias() += as_matrix(a).transpose() * G;
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const auto r = a.rows(), c = a.cols();
  std::vector<double> data(r * c);
  as_matrix(data, c, r) = as_matrix(a).transpose();
  Tensor out = make_result({c, r}, std::move(data), should_record({&a}));
  record({a}, out, [a, r, c](GradTape& tape, const Grad& g) {
    as_matrix(tape.accumulator(a), r, c) += as_matrix(g, c, r).transpose();
  });
  return out;
}

namespace {

enum class Binary { kAdd, kMul };

Tensor binary_op(const Tensor& a, const Tensor& b, Binary kind) {
  const char* name = kind == Binary::kAdd ? "add" : "mul";
  const bool bcast = is_row_broadcast(a, b);
  if (!bcast && a.shape() != b.shape()) shape_mismatch(name, a, b);
  const auto n = a.numel();
  const auto c = a.cols();
  const auto ad = a.data();
  const auto bd = b.data();
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = bcast ? bd[i % c] : bd[i];
    data[i] = kind == Binary::kAdd ? ad[i] + bv : ad[i] * bv;
  }
  Tensor out = make_result(a.shape(), std::move(data), should_record({&a, &b}));
  record({a, b}, out, [a, b, bcast, kind, n, c](GradTape& tape, const Grad& g) {
    if (a.requires_grad()) {
      auto& ga = tape.accumulator(a);
      if (kind == Binary::kAdd) {
        add_into(ga, g);
      } else {
        const auto bd = b.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * (bcast ? bd[i % c] : bd[i]);
      }
    }
    if (b.requires_grad()) {
      auto& gb = tape.accumulator(b);
      const auto ad = a.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double term = kind == Binary::kAdd ? g[i] : g[i] * ad[i];
        gb[bcast ? i % c : i] += term;
      }
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, Binary::kAdd); }

Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, Binary::kMul); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> data(a.data().begin(), a.data().end());
  for (auto& v : data) v *= factor;
  Tensor out = make_result(a.shape(), std::move(data), should_record({&a}));
  record({a}, out, [a, factor](GradTape& tape, const Grad& g) {
    add_into(tape.accumulator(a), g, factor);
  });
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_matrix(a, "softmax_rows");
  const auto r = a.rows(), c = a.cols();
  const auto ad = a.data();
  std::vector<double> data(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = ad.data() + i * c;
    double* y = data.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  Tensor out = make_result({r, c}, std::move(data), should_record({&a}));
  record({a}, out, [a, out_data = out, r, c](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    const auto y = out_data.data();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  const auto r = x.rows(), c = x.cols();
  if (gamma.numel() != c) shape_mismatch("layer_norm", x, gamma);
  if (beta.numel() != c) shape_mismatch("layer_norm", x, beta);
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<double> xhat(r * c), inv_std(r), data(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xd.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (row[j] - mu) * inv_std[i];
      data[i * c + j] = xhat[i * c + j] * gd[j] + bd[j];
    }
  }
  Tensor out = make_result({r, c}, std::move(data), should_record({&x, &gamma, &beta}));
  record({x, gamma, beta}, out,
         [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), r, c](
             GradTape& tape, const Grad& g) {
           const auto gd = gamma.data();
           if (gamma.requires_grad()) {
             auto& gg = tape.accumulator(gamma);
             for (std::size_t i = 0; i < r * c; ++i) gg[i % c] += g[i] * xhat[i];
           }
           if (beta.requires_grad()) {
             auto& gb = tape.accumulator(beta);
             for (std::size_t i = 0; i < r * c; ++i) gb[i % c] += g[i];
           }
           if (x.requires_grad()) {
             auto& gx = tape.accumulator(x);
             std::vector<double> dxhat(c);
             for (std::size_t i = 0; i < r; ++i) {
               double m1 = 0.0, m2 = 0.0;
               for (std::size_t j = 0; j < c; ++j) {
                 dxhat[j] = g[i * c + j] * gd[j];
                 m1 += dxhat[j];
                 m2 += dxhat[j] * xhat[i * c + j];
               }
               m1 /= static_cast<double>(c);
               m2 /= static_cast<double>(c);
               for (std::size_t j = 0; j < c; ++j) {
                 gx[i * c + j] += inv_std[i] * (dxhat[j] - m1 - xhat[i * c + j] * m2);
               }
             }
           }
         });
  return out;
}

Tensor gelu(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> data(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    data[i] = 0.5 * ad[i] * (1.0 + std::erf(ad[i] / std::numbers::sqrt2));
  }
  Tensor out = make_result(a.shape(), std::move(data), should_record({&a}));
  record({a}, out, [a](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    const auto ad = a.data();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < ad.size(); ++i) {
      const double x = ad[i];
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      ga[i] += g[i] * (cdf + x * pdf);
    }
  });
  return out;
}

Tensor log(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> data(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    if (ad[i] <= 0.0) throw NumericalError("log: non-positive argument");
    data[i] = std::log(ad[i]);
  }
  Tensor out = make_result(a.shape(), std::move(data), should_record({&a}));
  record({a}, out, [a](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    const auto ad = a.data();
    for (std::size_t i = 0; i < ad.size(); ++i) ga[i] += g[i] / ad[i];
  });
  return out;
}

Tensor exp(const Tensor& a) {
  const auto ad = a.data();
  std::vector<double> data(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) data[i] = std::exp(ad[i]);
  Tensor out = make_result(a.shape(), std::move(data), should_record({&a}));
  record({a}, out, [a, y = out](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    const auto yd = y.data();
    for (std::size_t i = 0; i < yd.size(); ++i) ga[i] += g[i] * yd[i];
  });
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
  }
  std::vector<double> data(a.data().begin(), a.data().end());
  Tensor out = make_result(std::move(shape), std::move(data), should_record({&a}));
  record({a}, out, [a](GradTape& tape, const Grad& g) { add_into(tape.accumulator(a), g); });
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin >= end || end > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
  }
  const auto c = a.cols();
  std::vector<double> data(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           a.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  Tensor out = make_result({end - begin, c}, std::move(data), should_record({&a}));
  record({a}, out, [a, begin, c](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
  });
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_cols");
  if (begin >= end || end > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
  }
  const auto r = a.rows(), c = a.cols(), w = end - begin;
  const auto ad = a.data();
  std::vector<double> data(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(ad.data() + i * c + begin, w, data.data() + i * w);
  }
  Tensor out = make_result({r, w}, std::move(data), should_record({&a}));
  record({a}, out, [a, begin, r, c, w](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
    }
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const auto c = parts.front().cols();
  std::size_t r = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != c) shape_mismatch("concat_rows", parts.front(), p);
    r += p.rows();
  }
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  Tensor out = make_result({r, c}, std::move(data), should_record(std::span<const Tensor>(parts)));
  record(parts, out, [parts](GradTape& tape, const Grad& g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) {
        auto& gp = tape.accumulator(p);
        for (std::size_t i = 0; i < p.numel(); ++i) gp[i] += g[offset + i];
      }
      offset += p.numel();
    }
  });
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const auto r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != r) shape_mismatch("concat_cols", parts.front(), p);
    c += p.cols();
  }
  std::vector<double> data(r * c);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto pc = p.cols();
    const auto pd = p.data();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(pd.data() + i * pc, pc, data.data() + i * c + offset);
    offset += pc;
  }
  Tensor out = make_result({r, c}, std::move(data), should_record(std::span<const Tensor>(parts)));
  record(parts, out, [parts, r, c](GradTape& tape, const Grad& g) {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const auto pc = p.cols();
      if (p.requires_grad()) {
        auto& gp = tape.accumulator(p);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * c + offset + j];
        }
      }
      offset += pc;
    }
  });
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = make_result({1}, {s}, should_record({&a}));
  record({a}, out, [a](GradTape& tape, const Grad& g) {
    for (auto& v : tape.accumulator(a)) v += g[0];
  });
  return out;
}

Tensor sum_axis(const Tensor& a, std::size_t axis) {
  require_matrix(a, "sum_axis");
  if (axis > 1) throw DimensionError("sum_axis: axis must be 0 or 1");
  const auto r = a.rows(), c = a.cols();
  const auto ad = a.data();
  std::vector<double> data(axis == 0 ? c : r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) data[axis == 0 ? j : i] += ad[i * c + j];
  }
  Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
  Tensor out = make_result(std::move(shape), std::move(data), should_record({&a}));
  record({a}, out, [a, axis, r, c](GradTape& tape, const Grad& g) {
    auto& ga = tape.accumulator(a);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[axis == 0 ? j : i];
    }
  });
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  require_matrix(a, "mean_axis");
  const double n = static_cast<double>(axis == 0 ? a.rows() : a.cols());
  return scale(sum_axis(a, axis), 1.0 / n);
}

}  // namespace promptlab
