// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal graph-based reverse-mode autodiff over dense f64 arrays.
//
// Every op returns a Value that owns its data and, when any input requires a
// gradient, keeps its inputs alive together with a closure that pushes the
// output gradient back into them. backward() walks that graph in reverse
// topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hava/matrix.hpp"

namespace hava::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Raised when a forward op produces NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Value {
 public:
  Value() = default;

  static Value constant(Shape shape, std::vector<double> data);
  static Value constant(const Matrix& m);
  static Value parameter(Shape shape, std::vector<double> data);
  static Value zeros(Shape shape);
  static Value scalar(double v);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t size() const;

  std::span<const double> data() const;
  /// Direct write access; intended for parameter leaves (optimizers, finite
  /// differences), not for values inside a recorded computation.
  std::span<double> mutable_data();
  /// Empty until a backward pass has reached this value.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();

  bool requires_grad() const;
  double item() const;
  void zero_grad();
  /// Constant copy that does not participate in gradient propagation.
  Value detach() const;
  Matrix to_matrix() const;

  detail::Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const noexcept { return node_; }
  explicit Value(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

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

bool grad_enabled() noexcept;

/// Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
/// Leaf gradients add up across calls; intermediate gradients are recomputed.
void backward(const Value& loss);

// Elementwise.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value leaky_relu(const Value& x, double alpha);
Value tanh(const Value& x);
Value sigmoid(const Value& x);

// Reductions to a scalar (shape {1}).
Value sum(const Value& x);
Value abs_sum(const Value& x);
Value square_sum(const Value& x);
/// sum(x * w) for a constant weight array w of the same size.
Value weighted_sum(const Value& x, std::span<const double> weights);

// Shape manipulation. Rank-2 helpers treat the array as rows x cols.
Value reshape(const Value& x, Shape shape);
Value concat_cols(const std::vector<Value>& parts);
Value concat_rows(const std::vector<Value>& parts);
Value slice_cols(const Value& x, std::size_t start, std::size_t count);
Value slice_rows(const Value& x, std::size_t start, std::size_t count);
/// [B x C] -> [B*n x C]; row b is repeated n times consecutively.
Value repeat_rows(const Value& x, std::size_t n);
/// [N x C] -> [b*N x C]; the whole block is stacked b times.
Value tile_rows(const Value& x, std::size_t b);
/// [B x C x T] -> [B x C] (or [C x T] -> [C]) mean over the last axis.
Value mean_last_axis(const Value& x);

Value operator+(const Value& a, const Value& b);
Value operator-(const Value& a, const Value& b);
Value operator*(const Value& a, const Value& b);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";
};

/// Builds an op result. Records `parents` and `fn` only when gradients are
/// enabled and some parent requires one. Throws NonFiniteError on NaN/Inf.
Value make_result(const char* op, Shape shape, std::vector<double> data,
                  std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn);

/// Gradient buffer of a parent, allocated on first use.
std::vector<double>& grad_of(Node& n);

}  // namespace detail

}  // namespace hava::ad
