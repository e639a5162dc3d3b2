// core/src/tensor.cpp

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

#include "nvl/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace nvl {

namespace detail {

struct Node {
  const char* op = "leaf";
  Shape shape;
  std::shared_ptr<std::vector<double>> value;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  std::span<double> grad_buffer() {
    if (!has_grad) {
      grad.assign(value->size(), 0.0);
      has_grad = true;
    }
    return grad;
  }
};

}  // namespace detail

namespace {

thread_local bool g_recording = true;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + to_string(t.shape()));
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_recording) { g_recording = false; }
NoGradGuard::~NoGradGuard() { g_recording = previous_; }
bool grad_recording_enabled() { return g_recording; }

// ---------------------------------------------------------------------------
// Tensor handle

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
  if (nvl::numel(shape) != values.size())
    throw ShapeError("tensor of shape " + to_string(shape) + " cannot hold " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<double>>(std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = nvl::numel(shape);
  return from_vector(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= ndim())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value->size(); }
std::span<const double> Tensor::data() const { return *node_->value; }

std::span<double> Tensor::mutable_data() {
  if (!node_->leaf) throw std::logic_error("mutable_data() on a non-leaf tensor");
  return *node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return (*node_->value)[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return (*node_->value)[row * shape()[1] + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!node_->leaf) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return node_->leaf; }
bool Tensor::has_grad() const { return node_->has_grad; }

std::span<const double> Tensor::grad() const {
  if (!node_->has_grad) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  node_->grad.clear();
  node_->has_grad = false;
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (!node_->leaf) throw std::logic_error("accumulate_grad: not a leaf");
  if (g.size() != numel())
    throw ShapeError("accumulate_grad: " + std::to_string(g.size()) + " values for shape " + to_string(shape()));
  auto buf = node_->grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->op = "detach";
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::shadow() const {
  if (!node_->leaf) throw std::logic_error("shadow() on a non-leaf tensor");
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->requires_grad = node_->requires_grad;
  return Tensor(std::move(node));
}

void Tensor::backward(bool retain_graph) const {
  if (numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + to_string(shape()));
  if (!node_->requires_grad) throw std::logic_error("backward() on a tensor that does not require grad");
  if (node_->released) throw std::logic_error("backward() through a graph that was already released");

  // Iterative post-order DFS; `order` ends up topologically sorted.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per pass; only leaves accumulate across passes.
  for (detail::Node* node : order)
    if (!node->leaf) node->grad.assign(node->value->size(), 0.0), node->has_grad = true;
  node_->grad_buffer()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->leaf || !node->backward) continue;
    if (node->released) throw std::logic_error("backward() through a graph that was already released");
    GradContext ctx;
    ctx.out_value = *node->value;
    ctx.out_grad = node->grad;
    ctx.in_values.reserve(node->inputs.size());
    ctx.in_grads.reserve(node->inputs.size());
    for (auto& input : node->inputs) {
      ctx.in_values.emplace_back(*input->value);
      ctx.in_grads.push_back(input->requires_grad ? input->grad_buffer() : std::span<double>{});
    }
    node->backward(ctx);
  }

  if (!retain_graph) {
    for (detail::Node* node : order) {
      if (node->leaf) continue;
      node->inputs.clear();
      node->backward = nullptr;
      node->released = true;
    }
  }
}

Tensor make_op(const char* name, Shape shape, std::vector<double> values,
               std::vector<Tensor> inputs, BackwardFn backward) {
  if (numel(shape) != values.size())
    throw ShapeError(std::string(name) + ": result shape " + to_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  auto node = std::make_shared<detail::Node>();
  node->op = name;
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<double>>(std::move(values));
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (any && g_recording) {
    node->requires_grad = true;
    node->leaf = false;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node_);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  std::vector<double> out(m * n);
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);
  return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](const GradContext& ctx) {
    ConstMap dc(ctx.out_grad.data(), m, n);
    if (!ctx.in_grads[0].empty())
      MutMap(ctx.in_grads[0].data(), m, k).noalias() += dc * ConstMap(ctx.in_values[1].data(), k, n).transpose();
    if (!ctx.in_grads[1].empty())
      MutMap(ctx.in_grads[1].data(), k, n).noalias() += ConstMap(ctx.in_values[0].data(), m, k).transpose() * dc;
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  MutMap(out.data(), n, m) = ConstMap(a.data().data(), m, n).transpose();
  return make_op("transpose", {n, m}, std::move(out), {a}, [m, n](const GradContext& ctx) {
    MutMap(ctx.in_grads[0].data(), m, n) += ConstMap(ctx.out_grad.data(), n, m).transpose();
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_2d(x, "affine");
  require_2d(w, "affine");
  const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in)
    throw ShapeError("affine: input " + to_string(x.shape()) + " does not match weight " + to_string(w.shape()));
  if (b.numel() != out_dim)
    throw ShapeError("affine: bias " + to_string(b.shape()) + " does not match weight " + to_string(w.shape()));
  std::vector<double> out(rows * out_dim);
  MutMap y(out.data(), rows, out_dim);
  y.noalias() = ConstMap(x.data().data(), rows, in) * ConstMap(w.data().data(), in, out_dim);
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out_dim);
  return make_op("affine", {rows, out_dim}, std::move(out), {x, w, b},
                 [rows, in, out_dim](const GradContext& ctx) {
                   ConstMap dy(ctx.out_grad.data(), rows, out_dim);
                   if (!ctx.in_grads[0].empty())
                     MutMap(ctx.in_grads[0].data(), rows, in).noalias() +=
                         dy * ConstMap(ctx.in_values[1].data(), in, out_dim).transpose();
                   if (!ctx.in_grads[1].empty())
                     MutMap(ctx.in_grads[1].data(), in, out_dim).noalias() +=
                         ConstMap(ctx.in_values[0].data(), rows, in).transpose() * dy;
                   if (!ctx.in_grads[2].empty())
                     Eigen::Map<Eigen::RowVectorXd>(ctx.in_grads[2].data(), out_dim) += dy.colwise().sum();
                 });
}

// ---------------------------------------------------------------------------
// Pointwise

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const char* binary_name(Binary op) {
  switch (op) {
    case Binary::add: return "add";
    case Binary::sub: return "sub";
    case Binary::mul: return "mul";
    case Binary::div: return "div";
  }
  return "?";
}

}  // namespace

Tensor elementwise(Binary op, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool a_scalar = a.numel() == 1, b_scalar = b.numel() == 1;
  if (!same && !a_scalar && !b_scalar)
    throw ShapeError(std::string(binary_name(op)) + ": cannot broadcast " + to_string(a.shape()) +
                     " with " + to_string(b.shape()));
  // An operand with a single element broadcasts unless shapes already agree.
  const bool bcast_a = !same && a_scalar;
  const bool bcast_b = !same && b_scalar && !bcast_a;
  const Shape out_shape = bcast_a ? b.shape() : a.shape();
  const std::size_t n = numel(out_shape);
  auto av = a.data();
  auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[bcast_a ? 0 : i], y = bv[bcast_b ? 0 : i];
    switch (op) {
      case Binary::add: out[i] = x + y; break;
      case Binary::sub: out[i] = x - y; break;
      case Binary::mul: out[i] = x * y; break;
      case Binary::div:
        if (y == 0.0) throw DomainError("div: division by zero");
        out[i] = x / y;
        break;
    }
  }
  return make_op(binary_name(op), out_shape, std::move(out), {a, b},
                 [op, n, bcast_a, bcast_b](const GradContext& ctx) {
                   auto ga = ctx.in_grads[0];
                   auto gb = ctx.in_grads[1];
                   const auto& av = ctx.in_values[0];
                   const auto& bv = ctx.in_values[1];
                   for (std::size_t i = 0; i < n; ++i) {
                     const double g = ctx.out_grad[i];
                     const double x = av[bcast_a ? 0 : i], y = bv[bcast_b ? 0 : i];
                     double dx = 0, dy = 0;
                     switch (op) {
                       case Binary::add: dx = g, dy = g; break;
                       case Binary::sub: dx = g, dy = -g; break;
                       case Binary::mul: dx = g * y, dy = g * x; break;
                       case Binary::div: dx = g / y, dy = -g * x / (y * y); break;
                     }
                     if (!ga.empty()) ga[bcast_a ? 0 : i] += dx;
                     if (!gb.empty()) gb[bcast_b ? 0 : i] += dy;
                   }
                 });
}

Tensor elementwise(Unary op, const Tensor& a) {
  static constexpr const char* kNames[] = {"sigmoid", "tanh", "relu", "log", "exp", "square", "sqrt", "neg"};
  const char* name = kNames[static_cast<int>(op)];
  auto av = a.data();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[i];
    switch (op) {
      case Unary::sigmoid: out[i] = stable_sigmoid(x); break;
      case Unary::tanh: out[i] = std::tanh(x); break;
      case Unary::relu: out[i] = x > 0 ? x : 0.0; break;
      case Unary::log:
        if (!(x > 0)) throw DomainError("log: argument " + std::to_string(x) + " is not positive");
        out[i] = std::log(x);
        break;
      case Unary::exp: out[i] = std::exp(x); break;
      case Unary::square: out[i] = x * x; break;
      case Unary::sqrt:
        if (x < 0) throw DomainError("sqrt: argument " + std::to_string(x) + " is negative");
        out[i] = std::sqrt(x);
        break;
      case Unary::neg: out[i] = -x; break;
    }
  }
  return make_op(name, a.shape(), std::move(out), {a}, [op, n](const GradContext& ctx) {
    auto gx = ctx.in_grads[0];
    const auto& x = ctx.in_values[0];
    const auto& y = ctx.out_value;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = ctx.out_grad[i];
      switch (op) {
        case Unary::sigmoid: gx[i] += g * y[i] * (1.0 - y[i]); break;
        case Unary::tanh: gx[i] += g * (1.0 - y[i] * y[i]); break;
        case Unary::relu: gx[i] += x[i] > 0 ? g : 0.0; break;
        case Unary::log: gx[i] += g / x[i]; break;
        case Unary::exp: gx[i] += g * y[i]; break;
        case Unary::square: gx[i] += 2.0 * g * x[i]; break;
        case Unary::sqrt: gx[i] += 0.5 * g / y[i]; break;
        case Unary::neg: gx[i] -= g; break;
      }
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return make_op("scale", a.shape(), std::move(out), {a}, [factor](const GradContext& ctx) {
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) ctx.in_grads[0][i] += factor * ctx.out_grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(Reduction op, const Tensor& t, std::vector<std::size_t> axes) {
  const Shape& shape = t.shape();
  if (t.numel() == 0) throw ShapeError("reduce: empty tensor " + to_string(shape));
  if (axes.empty()) {
    axes.resize(shape.size());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
  }
  std::vector<bool> reduced(shape.size(), false);
  for (std::size_t ax : axes) {
    if (ax >= shape.size() || reduced[ax])
      throw ShapeError("reduce: invalid axis " + std::to_string(ax) + " for shape " + to_string(shape));
    reduced[ax] = true;
  }
  Shape out_shape;
  for (std::size_t d = 0; d < shape.size(); ++d)
    if (!reduced[d]) out_shape.push_back(shape[d]);

  // Map each input element to its output slot.
  const std::size_t n = t.numel();
  auto slot = std::make_shared<std::vector<std::size_t>>(n);
  {
    std::vector<std::size_t> index(shape.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t o = 0;
      for (std::size_t d = 0; d < shape.size(); ++d)
        if (!reduced[d]) o = o * shape[d] + index[d];
      (*slot)[i] = o;
      for (std::size_t d = shape.size(); d-- > 0;) {
        if (++index[d] < shape[d]) break;
        index[d] = 0;
      }
    }
  }
  const std::size_t m = numel(out_shape);
  const double count = static_cast<double>(n / m);
  auto x = t.data();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    out[(*slot)[i]] += op == Reduction::l2norm ? x[i] * x[i] : x[i];
  for (double& v : out) {
    if (op == Reduction::mean) v /= count;
    if (op == Reduction::l2norm) v = std::sqrt(v);
  }
  static constexpr const char* kNames[] = {"sum", "mean", "l2norm"};
  return make_op(kNames[static_cast<int>(op)], std::move(out_shape), std::move(out), {t},
                 [op, slot, count](const GradContext& ctx) {
                   auto gx = ctx.in_grads[0];
                   const auto& x = ctx.in_values[0];
                   for (std::size_t i = 0; i < gx.size(); ++i) {
                     const std::size_t o = (*slot)[i];
                     const double g = ctx.out_grad[o];
                     switch (op) {
                       case Reduction::sum: gx[i] += g; break;
                       case Reduction::mean: gx[i] += g / count; break;
                       case Reduction::l2norm: {
                         const double norm = ctx.out_value[o];
                         if (norm > 0) gx[i] += g * x[i] / norm;
                         break;
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Structural

Tensor reshape(const Tensor& t, Shape shape) {
  if (numel(shape) != t.numel())
    throw ShapeError("reshape: cannot view " + to_string(t.shape()) + " as " + to_string(shape));
  std::vector<double> out(t.data().begin(), t.data().end());
  return make_op("reshape", std::move(shape), std::move(out), {t}, [](const GradContext& ctx) {
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) ctx.in_grads[0][i] += ctx.out_grad[i];
  });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  require_2d(t, "slice_rows");
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  if (begin >= end || end > rows)
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + to_string(t.shape()));
  auto x = t.data();
  std::vector<double> out(x.begin() + begin * cols, x.begin() + end * cols);
  return make_op("slice_rows", {end - begin, cols}, std::move(out), {t}, [begin, cols](const GradContext& ctx) {
    double* g = ctx.in_grads[0].data() + begin * cols;
    for (std::size_t i = 0; i < ctx.out_grad.size(); ++i) g[i] += ctx.out_grad[i];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  for (const auto& p : parts) require_2d(p, "concat_cols");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(0) != rows)
      throw ShapeError("concat_cols: row mismatch " + to_string(parts[0].shape()) + " vs " + to_string(p.shape()));
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(rows * total);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto x = parts[p].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(x.data() + r * widths[p], widths[p], out.data() + r * total + col);
    col += widths[p];
  }
  return make_op("concat_cols", {rows, total}, std::move(out), parts, [rows, total, widths](const GradContext& ctx) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (!ctx.in_grads[p].empty())
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < widths[p]; ++c)
            ctx.in_grads[p][r * widths[p] + c] += ctx.out_grad[r * total + col + c];
      col += widths[p];
    }
  });
}

Tensor reverse_rows(const Tensor& t) {
  require_2d(t, "reverse_rows");
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  auto x = t.data();
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(x.data() + (rows - 1 - r) * cols, cols, out.data() + r * cols);
  return make_op("reverse_rows", t.shape(), std::move(out), {t}, [rows, cols](const GradContext& ctx) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        ctx.in_grads[0][(rows - 1 - r) * cols + c] += ctx.out_grad[r * cols + c];
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  const bool vector = row.ndim() == 1 || (row.ndim() == 2 && row.dim(0) == 1);
  if (!vector) throw ShapeError("repeat_rows: expected a row vector, got " + to_string(row.shape()));
  if (n == 0) throw ShapeError("repeat_rows: zero repetitions");
  const std::size_t k = row.numel();
  auto x = row.data();
  std::vector<double> out(n * k);
  for (std::size_t r = 0; r < n; ++r) std::copy(x.begin(), x.end(), out.begin() + r * k);
  return make_op("repeat_rows", {n, k}, std::move(out), {row}, [n, k](const GradContext& ctx) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) ctx.in_grads[0][c] += ctx.out_grad[r * k + c];
  });
}

Tensor splice_rows(const Tensor& t, const std::vector<int>& offsets) {
  require_2d(t, "splice_rows");
  if (offsets.empty() || !std::is_sorted(offsets.begin(), offsets.end()) ||
      std::adjacent_find(offsets.begin(), offsets.end()) != offsets.end())
    throw std::invalid_argument("splice_rows: offsets must be strictly increasing");
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  const std::size_t span = static_cast<std::size_t>(offsets.back() - offsets.front());
  if (rows <= span)
    throw ShapeError("splice_rows: " + std::to_string(rows) + " rows cannot cover a context of " +
                     std::to_string(span + 1));
  const std::size_t out_rows = rows - span, width = offsets.size() * cols;
  std::vector<std::size_t> shift;
  for (int o : offsets) shift.push_back(static_cast<std::size_t>(o - offsets.front()));
  auto x = t.data();
  std::vector<double> out(out_rows * width);
  for (std::size_t r = 0; r < out_rows; ++r)
    for (std::size_t j = 0; j < shift.size(); ++j)
      std::copy_n(x.data() + (r + shift[j]) * cols, cols, out.data() + r * width + j * cols);
  return make_op("splice_rows", {out_rows, width}, std::move(out), {t},
                 [out_rows, width, cols, shift](const GradContext& ctx) {
                   for (std::size_t r = 0; r < out_rows; ++r)
                     for (std::size_t j = 0; j < shift.size(); ++j) {
                       const double* g = ctx.out_grad.data() + r * width + j * cols;
                       double* dst = ctx.in_grads[0].data() + (r + shift[j]) * cols;
                       for (std::size_t c = 0; c < cols; ++c) dst[c] += g[c];
                     }
                 });
}

Tensor select(const Tensor& t, std::size_t flat_index) {
  if (flat_index >= t.numel())
    throw ShapeError("select: index " + std::to_string(flat_index) + " out of range for shape " +
                     to_string(t.shape()));
  return make_op("select", {}, {t.data()[flat_index]}, {t}, [flat_index](const GradContext& ctx) {
    ctx.in_grads[0][flat_index] += ctx.out_grad[0];
  });
}

}  // namespace nvl
