// SPDX-License-Identifier: Apache-2.0
#include "hava/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hava::ad {

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr leaf(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw std::invalid_argument("Value: shape " + shape_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return n;
}

void check_same_shape(const char* op, const Value& a, const Value& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void check_rank2(const char* op, const Value& x) {
  if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": expected a rank-2 value, got " +
                                                 shape_string(x.shape()));
}

template <typename Fwd, typename Bwd>
Value unary(const char* op, const Value& x, Fwd fwd, Bwd dfdx) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return detail::make_result(op, x.shape(), std::move(out), {x.node_ptr()}, [dfdx](Node& self) {
    auto& p = *self.parents[0];
    auto& g = detail::grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * dfdx(p.data[i], self.data[i]);
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

std::vector<double>& grad_of(Node& n) {
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
  return n.grad;
}

Value make_result(const char* op, Shape shape, std::vector<double> data, std::vector<NodePtr> parents,
                  std::function<void(Node&)> fn) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
  }
  auto n = leaf(std::move(shape), std::move(data), false);
  n->op = op;
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(), [](const NodePtr& p) { return p->requires_grad; });
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward = std::move(fn);
    }
  }
  return Value(std::move(n));
}

}  // namespace detail

Value Value::constant(Shape shape, std::vector<double> data) {
  return Value(leaf(std::move(shape), std::move(data), false));
}
Value Value::constant(const Matrix& m) { return constant({m.rows(), m.cols()}, m.data()); }
Value Value::parameter(Shape shape, std::vector<double> data) {
  for (double v : data) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite parameter value");
  }
  return Value(leaf(std::move(shape), std::move(data), true));
}
Value Value::zeros(Shape shape) {
  const auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}
Value Value::scalar(double v) { return constant({1}, {v}); }

const Shape& Value::shape() const { return node_->shape; }
std::size_t Value::size() const { return node_->data.size(); }
std::span<const double> Value::data() const { return node_->data; }
std::span<double> Value::mutable_data() { return node_->data; }
std::span<const double> Value::grad() const { return node_->grad; }
std::span<double> Value::mutable_grad() { return detail::grad_of(*node_); }
bool Value::requires_grad() const { return node_->requires_grad; }

double Value::item() const {
  if (size() != 1) throw std::invalid_argument("item(): value has " + std::to_string(size()) + " elements");
  return node_->data[0];
}

void Value::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Value Value::detach() const { return constant(node_->shape, node_->data); }

Matrix Value::to_matrix() const {
  if (rank() == 1) return Matrix(1, size(), node_->data);
  if (rank() != 2) throw std::invalid_argument("to_matrix(): expected rank 1 or 2");
  return Matrix(dim(0), dim(1), node_->data);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

void backward(const Value& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward(): loss must be a scalar, got " +
                                (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; graphs from unrolled recurrences are deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) {
      n->grad.assign(n->data.size(), 0.0);
    } else {
      detail::grad_of(*n);
    }
  }
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

Value add(const Value& a, const Value& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result("add", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = detail::grad_of(*p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Value sub(const Value& a, const Value& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    const double sign[2] = {1.0, -1.0};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto& g = detail::grad_of(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

Value mul(const Value& a, const Value& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [](Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = detail::grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = detail::grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

Value scale(const Value& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Value leaky_relu(const Value& x, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("leaky_relu: slope must lie in (0, 1)");
  // Slope alpha at exactly zero.
  return unary(
      "leaky_relu", x, [alpha](double v) { return v > 0 ? v : alpha * v; },
      [alpha](double v, double) { return v > 0 ? 1.0 : alpha; });
}

Value tanh(const Value& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(const Value& x) {
  return unary(
      "sigmoid", x, [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Value sum(const Value& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum", {1}, {s}, {x.node_ptr()}, [](Node& self) {
    auto& g = detail::grad_of(*self.parents[0]);
    for (auto& v : g) v += self.grad[0];
  });
}

Value abs_sum(const Value& x) {
  double s = 0.0;
  for (double v : x.data()) s += std::abs(v);
  return detail::make_result("abs_sum", {1}, {s}, {x.node_ptr()}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = detail::grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = p.data[i];
      g[i] += self.grad[0] * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
    }
  });
}

Value square_sum(const Value& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return detail::make_result("square_sum", {1}, {s}, {x.node_ptr()}, [](Node& self) {
    auto& p = *self.parents[0];
    auto& g = detail::grad_of(p);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[0] * p.data[i];
  });
}

Value weighted_sum(const Value& x, std::span<const double> weights) {
  if (weights.size() != x.size()) throw std::invalid_argument("weighted_sum: weight count mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.data()[i];
  std::vector<double> w(weights.begin(), weights.end());
  return detail::make_result("weighted_sum", {1}, {s}, {x.node_ptr()}, [w = std::move(w)](Node& self) {
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Value reshape(const Value& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(out), {x.node_ptr()}, [](Node& self) {
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::vector<std::size_t> offsets;
  std::size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    check_rank2("concat_cols", p);
    if (p.dim(0) != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    offsets.push_back(cols);
    cols += p.dim(1);
    parents.push_back(p.node_ptr());
  }
  std::vector<double> out(rows * cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].dim(1);
    const auto src = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * w), w, out.begin() + static_cast<std::ptrdiff_t>(r * cols + offsets[k]));
  }
  return detail::make_result("concat_cols", {rows, cols}, std::move(out), std::move(parents),
                             [offsets, rows, cols](Node& self) {
                               for (std::size_t k = 0; k < self.parents.size(); ++k) {
                                 auto& p = *self.parents[k];
                                 if (!p.requires_grad) continue;
                                 auto& g = detail::grad_of(p);
                                 const std::size_t w = p.shape[1];
                                 for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * cols + offsets[k] + c];
                               }
                             });
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<NodePtr> parents;
  std::vector<double> out;
  for (const auto& p : parts) {
    check_rank2("concat_rows", p);
    if (p.dim(1) != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
    parents.push_back(p.node_ptr());
  }
  return detail::make_result("concat_rows", {rows, cols}, std::move(out), std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->data.size();
      if (p->requires_grad) {
        auto& g = detail::grad_of(*p);
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

Value slice_cols(const Value& x, std::size_t start, std::size_t count) {
  check_rank2("slice_cols", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (start + count > cols) throw std::invalid_argument("slice_cols: range out of bounds");
  std::vector<double> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = x.data()[r * cols + start + c];
  return detail::make_result("slice_cols", {rows, count}, std::move(out), {x.node_ptr()},
                             [rows, cols, start, count](Node& self) {
                               auto& g = detail::grad_of(*self.parents[0]);
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t c = 0; c < count; ++c) g[r * cols + start + c] += self.grad[r * count + c];
                             });
}

Value slice_rows(const Value& x, std::size_t start, std::size_t count) {
  check_rank2("slice_rows", x);
  const std::size_t cols = x.dim(1);
  if (start + count > x.dim(0)) throw std::invalid_argument("slice_rows: range out of bounds");
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(start * cols),
                          x.data().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  return detail::make_result("slice_rows", {count, cols}, std::move(out), {x.node_ptr()}, [start, cols](Node& self) {
    auto& g = detail::grad_of(*self.parents[0]);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[start * cols + i] += self.grad[i];
  });
}

Value repeat_rows(const Value& x, std::size_t n) {
  check_rank2("repeat_rows", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(rows * n * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < n; ++k)
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * cols), cols,
                  out.begin() + static_cast<std::ptrdiff_t>((r * n + k) * cols));
  return detail::make_result("repeat_rows", {rows * n, cols}, std::move(out), {x.node_ptr()},
                             [rows, cols, n](Node& self) {
                               auto& g = detail::grad_of(*self.parents[0]);
                               for (std::size_t r = 0; r < rows; ++r)
                                 for (std::size_t k = 0; k < n; ++k)
                                   for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[(r * n + k) * cols + c];
                             });
}

Value tile_rows(const Value& x, std::size_t b) {
  check_rank2("tile_rows", x);
  const std::size_t block = x.size();
  std::vector<double> out;
  out.reserve(block * b);
  for (std::size_t k = 0; k < b; ++k) out.insert(out.end(), x.data().begin(), x.data().end());
  return detail::make_result("tile_rows", {x.dim(0) * b, x.dim(1)}, std::move(out), {x.node_ptr()},
                             [block, b](Node& self) {
                               auto& g = detail::grad_of(*self.parents[0]);
                               for (std::size_t k = 0; k < b; ++k)
                                 for (std::size_t i = 0; i < block; ++i) g[i] += self.grad[k * block + i];
                             });
}

Value mean_last_axis(const Value& x) {
  if (x.rank() < 2) throw std::invalid_argument("mean_last_axis: need rank >= 2");
  const std::size_t t = x.shape().back();
  const std::size_t outer = x.size() / t;
  Shape shape(x.shape().begin(), x.shape().end() - 1);
  std::vector<double> out(outer, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < t; ++k) out[o] += x.data()[o * t + k];
    out[o] /= static_cast<double>(t);
  }
  return detail::make_result("mean_last_axis", std::move(shape), std::move(out), {x.node_ptr()},
                             [t, outer](Node& self) {
                               auto& g = detail::grad_of(*self.parents[0]);
                               const double inv = 1.0 / static_cast<double>(t);
                               for (std::size_t o = 0; o < outer; ++o)
                                 for (std::size_t k = 0; k < t; ++k) g[o * t + k] += self.grad[o] * inv;
                             });
}

Value operator+(const Value& a, const Value& b) { return add(a, b); }
Value operator-(const Value& a, const Value& b) { return sub(a, b); }
Value operator*(const Value& a, const Value& b) { return mul(a, b); }

}  // namespace hava::ad
