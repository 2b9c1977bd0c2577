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

// Dense row-major tensors with a reverse-mode gradient tape.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets the tape and the optimizer refer to parameters by identity. Use
// clone() for an independent copy.
//
// Operations record themselves on the thread's active GradTape (see
// TapeScope) whenever at least one operand requires a gradient. Trainable
// leaves require gradients; frozen tensors never do, so the tape never
// produces a gradient for them.

#ifndef PROMPTLAB_TENSOR_HPP_
#define PROMPTLAB_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace promptlab {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run-level arithmetic precision. Values are held in doubles; under kF32
/// every operation result is rounded to the nearest float.
enum class Precision { kF32, kF64 };

void set_precision(Precision p);
Precision precision();
std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

/// Restores the previous precision on destruction.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  bool trainable = false;
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_rows(const std::vector<std::vector<double>>& rows);

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t numel() const { return s_->data.size(); }
  /// Extent of axis 0 (1 for a vector viewed as a row).
  std::size_t rows() const;
  /// Extent of the last axis.
  std::size_t cols() const;

  std::span<const double> data() const { return s_->data; }
  /// Direct write access. Only valid for tensors that are not recorded on a
  /// live tape; the optimizer and initializers use it.
  std::span<double> mutable_data() { return s_->data; }

  double at(std::size_t i) const { return s_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }
  double item() const;

  std::vector<double> row(std::size_t r) const;

  bool trainable() const { return s_->trainable; }
  /// Marks a leaf as trainable (or frozen). Trainable leaves require gradients.
  void set_trainable(bool on);
  bool requires_grad() const { return s_->requires_grad; }

  const TensorStorage* id() const { return s_.get(); }

  /// Deep copy; the copy is a frozen leaf.
  Tensor clone() const;

  bool same_values(const Tensor& other) const;

 private:
  friend class GradTape;
  friend Tensor make_result(Shape, std::vector<double>, bool);
  std::shared_ptr<TensorStorage> s_;
};

using Grad = std::vector<double>;

/// Gradients of trainable leaves, keyed by tensor identity.
class GradientMap {
 public:
  const Grad* find(const Tensor& t) const;
  Grad& operator[](const Tensor& t);
  bool contains(const Tensor& t) const { return find(t) != nullptr; }
  std::size_t size() const { return grads_.size(); }
  /// Adds other into this map, scaled by factor.
  void accumulate(const GradientMap& other, double factor = 1.0);
  void scale(double factor);
  double global_norm() const;

 private:
  std::unordered_map<const TensorStorage*, Grad> grads_;
};

class GradTape {
 public:
  using BackwardFn = std::function<void(GradTape&, const Grad& out_grad)>;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  /// Reverse sweep from a scalar loss. Returns gradients for every trainable
  /// leaf reached. The tape can be swept once.
  GradientMap backward(const Tensor& loss);

  /// Accumulator for t, zero-initialized on first use. Used by backward
  /// functions to push gradient into their operands.
  Grad& accumulator(const Tensor& t);

  std::size_t size() const { return nodes_.size(); }
  /// Number of nodes visited by the last backward sweep.
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const TensorStorage*, Grad> accum_;
  std::size_t visited_ = 0;
  bool swept_ = false;
};

/// Makes a tape active on the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* saved_;
};

/// Disables recording and optimizer steps on the current thread.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  GradTape* saved_tape_;
  bool saved_enabled_;
};

GradTape* active_tape();
bool grad_enabled();

// Primitive operations. Shapes are checked eagerly; mismatches throw
// DimensionError naming both shapes. Every result is checked for finiteness.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Elementwise sum. b may have a's shape or be a row vector ({C} or {1,C})
/// broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
/// Elementwise product with the same broadcasting rule as add.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& a);
/// Reduction over axis 0 (giving {1,C}) or axis 1 (giving {R,1}).
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean_axis(const Tensor& a, std::size_t axis);

/// Builds an op result: rounds to the run precision and checks finiteness.
/// record_grad marks the result as requiring a gradient.
Tensor make_result(Shape shape, std::vector<double> data, bool record_grad);

/// True when the result of an op on these operands must be recorded: a tape
/// is active and at least one operand requires a gradient.
bool should_record(std::initializer_list<const Tensor*> operands);
bool should_record(std::span<const Tensor> operands);

double round_to_precision(double v);

}  // namespace promptlab

#endif  // PROMPTLAB_TENSOR_HPP_
