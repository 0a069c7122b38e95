// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "hava/autodiff.hpp"

namespace hava::ad {

/// Named trainable values in insertion order.
class ParameterSet {
 public:
  ParameterSet() = default;
  explicit ParameterSet(std::uint64_t seed) : seed_(seed) {}

  Value& add(const std::string& name, Value v);
  const Value& get(const std::string& name) const;
  Value& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::pair<std::string, Value>>& items() const noexcept { return items_; }
  std::vector<std::pair<std::string, Value>>& items() noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t scalar_count() const;
  std::uint64_t seed() const noexcept { return seed_; }

  void zero_grad();
  /// Deep copy: fresh leaves with the same values and no gradients.
  ParameterSet clone() const;

 private:
  std::uint64_t seed_ = 0;
  std::vector<std::pair<std::string, Value>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Value glorot_uniform(std::mt19937_64& rng, Shape shape, std::size_t fan_in, std::size_t fan_out);

/// x[B x I] * w[I x O] + b[O]
Value dense(const Value& x, const Value& w, const Value& b);
/// x[B x I] * w[I x O]
Value matmul(const Value& x, const Value& w);

/// Cross-correlation along time. x is [C_in x T] or [B x C_in x T], kernel is
/// [C_out x C_in x K], bias is [C_out]. Zero padding of `padding` samples is
/// applied on both ends; output length is floor((T + 2p - K) / stride) + 1.
Value conv1d(const Value& x, const Value& kernel, const Value& bias, std::size_t stride, std::size_t padding = 0);

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding = 0);

using Adjacency = std::vector<std::vector<std::uint32_t>>;

/// a_v = (1 + eps) h_v + sum of h_u over neighbors u. h is [R x H] where R is a
/// multiple of the vertex count; each block of N rows is one graph copy.
Value neighbor_aggregate(const Value& h, const Adjacency& adjacency, const Value& eps);

/// dense(neighbor_aggregate(h, adjacency, eps), w, b)
Value graph_conv(const Value& h, const Adjacency& adjacency, const Value& w, const Value& b, const Value& eps);

struct LstmState {
  Value h;  // [B x H]
  Value c;  // [B x H]
};

/// Gate columns are ordered [input | forget | cell | output].
/// w_ih is [I x 4H], w_hh is [H x 4H], b is [4H].
LstmState lstm_cell(const Value& x, const LstmState& state, const Value& w_ih, const Value& w_hh, const Value& b);

}  // namespace hava::ad
