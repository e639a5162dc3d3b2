// core/include/nvl/tensor.hpp

// Copyright 2026  The nvl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef NVL_TENSOR_HPP_
#define NVL_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nvl {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Thrown when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a pointwise function is evaluated outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Everything a backward rule sees. Input gradient spans are empty for inputs
/// that do not require a gradient; rules must accumulate (+=), never assign.
struct GradContext {
  std::span<const double> out_value;
  std::span<const double> out_grad;
  std::vector<std::span<const double>> in_values;
  std::vector<std::span<double>> in_grads;
};

using BackwardFn = std::function<void(const GradContext&)>;

namespace detail {
struct Node;
}

/**
   Dense float64 tensor, row-major, with reverse-mode differentiation.

   A Tensor is a cheap handle to a shared graph node.  Values are immutable
   once constructed, except for leaves, whose storage optimizers update in
   place between graphs.  Operations on tensors that require a gradient
   record a backward rule; Tensor::backward() walks the recorded graph once in
   reverse topological order and accumulates into every reachable leaf.
*/
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Leaves only.  Writes are seen by every shadow of this leaf.
  std::span<double> mutable_data();
  double item() const;
  /// Row-major element access for 2-D tensors.
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  /// Leaves only.
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();
  /// Leaves only: grad += g.  Used to reduce gradients computed on shadows.
  void accumulate_grad(std::span<const double> g);

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires a
  /// gradient.  The graph is released afterwards unless retain_graph is set.
  void backward(bool retain_graph = false) const;

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// A new leaf sharing this leaf's storage but owning a separate gradient
  /// buffer, so several graphs can differentiate one parameter concurrently.
  Tensor shadow() const;

  const char* op_name() const;
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op(const char* name, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

  std::shared_ptr<detail::Node> node_;
};

/// Builds an operation node.  Used by the built-in operations below and by
/// fused layers elsewhere in the library.  The backward rule is only stored
/// when at least one input requires a gradient and recording is enabled.
Tensor make_op(const char* name, Shape shape, std::vector<double> values,
               std::vector<Tensor> inputs, BackwardFn backward);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x[T×in] · w[in×out] + b[out] added to every row.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

// Pointwise.  Binary operations accept equal shapes, or one operand with a
// single element which is broadcast.  Nothing else broadcasts.
enum class Binary { add, sub, mul, div };
enum class Unary { sigmoid, tanh, relu, log, exp, square, sqrt, neg };

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b);
Tensor elementwise(Unary op, const Tensor& a);

inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Binary::add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Binary::sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Binary::mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return elementwise(Binary::div, a, b); }
inline Tensor sigmoid(const Tensor& a) { return elementwise(Unary::sigmoid, a); }
inline Tensor tanh(const Tensor& a) { return elementwise(Unary::tanh, a); }
inline Tensor relu(const Tensor& a) { return elementwise(Unary::relu, a); }
inline Tensor log(const Tensor& a) { return elementwise(Unary::log, a); }
inline Tensor exp(const Tensor& a) { return elementwise(Unary::exp, a); }
inline Tensor square(const Tensor& a) { return elementwise(Unary::square, a); }
inline Tensor sqrt(const Tensor& a) { return elementwise(Unary::sqrt, a); }

Tensor scale(const Tensor& a, double factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// Reductions.  An empty axis list reduces over everything to a 0-d scalar;
// reduced axes are dropped from the result shape.
enum class Reduction { sum, mean, l2norm };

Tensor reduce(Reduction op, const Tensor& t, std::vector<std::size_t> axes = {});
inline Tensor sum(const Tensor& t, std::vector<std::size_t> axes = {}) {
  return reduce(Reduction::sum, t, std::move(axes));
}
inline Tensor mean(const Tensor& t, std::vector<std::size_t> axes = {}) {
  return reduce(Reduction::mean, t, std::move(axes));
}
/// Euclidean norm.  The gradient at the origin is taken to be zero.
inline Tensor l2norm(const Tensor& t, std::vector<std::size_t> axes = {}) {
  return reduce(Reduction::l2norm, t, std::move(axes));
}

// Structural operations.
Tensor reshape(const Tensor& t, Shape shape);
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reverse_rows(const Tensor& t);
/// Tiles a length-K vector (shape {K} or {1,K}) into an n×K matrix.
Tensor repeat_rows(const Tensor& row, std::size_t n);
/// Frame splicing for time-delay layers: output row r concatenates input rows
/// r + o - min(offsets) for each offset o.  Offsets must be increasing.
Tensor splice_rows(const Tensor& t, const std::vector<int>& offsets);
/// The element at a flat row-major index, as a 0-d scalar.
Tensor select(const Tensor& t, std::size_t flat_index);

}  // namespace nvl

#endif  // NVL_TENSOR_HPP_
