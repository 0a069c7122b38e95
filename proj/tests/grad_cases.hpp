// SPDX-License-Identifier: Apache-2.0
// Finite-difference scenarios shared by the unit tests and the acceptance run.
#pragma once

#include <algorithm>

#include "hava/animation_model.hpp"
#include "hava/layers.hpp"
#include "hava/mesh.hpp"
#include "hava/optim.hpp"
#include "hava/pose_model.hpp"
#include "support.hpp"

namespace hava::test {

inline model::AnimationConfig small_animation(std::uint64_t seed = 0) {
  model::AnimationConfig c;
  c.feature_dim = 5;
  c.bands = 2;
  c.alm_channels = {3, 3, 4, 4, 4};
  c.alm_mlp_hidden = {4, 4, 4};
  c.local_dim = 3;
  c.agm_channels = {3, 3, 3, 3};
  c.agm_mlp_hidden = 4;
  c.global_dim = 3;
  c.gcn_width = 5;
  c.gcn_layers = 2;
  c.seed = seed;
  return c;
}

inline model::PoseConfig small_pose(std::uint64_t seed = 0) {
  model::PoseConfig c;
  c.mel_bins = 8;
  c.mel_frames = 8;
  c.conv_channels = {3, 3, 4, 4, 4, 4, 4};
  c.lstm_hidden = 5;
  c.chunk_len = 4;
  c.seed = seed;
  return c;
}

inline std::vector<Matrix> random_windows(std::mt19937_64& rng, std::size_t n, std::size_t w, std::size_t d) {
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_matrix(rng, w, d));
  return out;
}

inline std::vector<Matrix> random_mels(std::mt19937_64& rng, std::size_t n, const model::PoseConfig& c) {
  return random_windows(rng, n, c.mel_bins, c.mel_frames);
}

/// Every layer primitive and the shape plumbing in one scalar loss.
inline ad::GradCheckResult primitive_gradient_case(std::uint64_t seed) {
  using namespace hava::ad;
  std::mt19937_64 rng(seed);
  ParameterSet ps;
  ps.add("x", random_parameter(rng, {2, 3, 7}));
  ps.add("k", random_parameter(rng, {4, 3, 3}, 0.5));
  ps.add("kb", random_parameter(rng, {4}));
  ps.add("w", random_parameter(rng, {8, 5}, 0.5));
  ps.add("b", random_parameter(rng, {5}));
  ps.add("eps", random_parameter(rng, {1}, 0.1));
  ps.add("gw", random_parameter(rng, {5, 5}, 0.4));
  ps.add("gb", random_parameter(rng, {5}));
  ps.add("w_ih", random_parameter(rng, {5, 12}, 0.5));
  ps.add("w_hh", random_parameter(rng, {3, 12}, 0.5));
  ps.add("lb", random_parameter(rng, {12}));
  ps.add("h0", random_parameter(rng, {1, 3}));
  ps.add("c0", random_parameter(rng, {1, 3}));
  const Adjacency ring{{1, 3}, {0, 2}, {1, 3}, {2, 0}};
  const auto target = random_vector(rng, 3);

  const LossFn f = [&] {
    const auto& p = ps;
    Value y = leaky_relu(conv1d(p.get("x"), p.get("k"), p.get("kb"), 2, 1), 0.2);  // [2 x 4 x 4]
    Value flat = reshape(y, {4, 8});                                               // 2 frames x 2 rows each
    Value d = tanh(dense(flat, p.get("w"), p.get("b")));                           // [4 x 5]
    d = graph_conv(d, ring, p.get("gw"), p.get("gb"), p.get("eps"));
    Value pooled = mean_last_axis(reshape(d, {1, 5, 4}));  // [1 x 5]
    LstmState st{p.get("h0"), p.get("c0")};
    st = lstm_cell(pooled, st, p.get("w_ih"), p.get("w_hh"), p.get("lb"));
    st = lstm_cell(sigmoid(pooled), st, p.get("w_ih"), p.get("w_hh"), p.get("lb"));
    // Shape plumbing: anchoring to row 0, tiling and concatenation.
    const Value anchored = sub(d, repeat_rows(slice_rows(d, 0, 1), 4));
    const Value mixed =
        concat_rows({tile_rows(slice_cols(anchored, 1, 2), 2), slice_cols(concat_cols({pooled, pooled}), 4, 2)});
    return add(add(square_sum(sub(st.h, Value::constant({1, 3}, target))), abs_sum(st.c)),
               scale(square_sum(mul(mixed, mixed)), 0.1));
  };
  return compare_gradients(f, ps, analytic_gradients(f, ps));
}

/// Full animation model on a 12-vertex mesh, two windows.
inline ad::GradCheckResult animation_gradient_case(std::uint64_t seed) {
  model::AnimationModel m(small_animation(seed), 12);
  for (auto& [name, v] : m.params().items())
    if (name.ends_with(".eps"))
      for (double& x : v.mutable_data()) x = 0.05;
  const auto mesh = mesh::build_adjacency(mesh::make_icosphere(12, 100.0));
  std::mt19937_64 rng(seed + 7);
  const auto windows = random_windows(rng, 2, 16, 5);
  const auto target = random_vector(rng, 2 * 12 * 3);
  const ad::LossFn f = [&] {
    return ad::square_sum(ad::sub(m.displacements(windows, mesh), ad::Value::constant({24, 3}, target)));
  };
  return ad::compare_gradients(f, m.params(), ad::analytic_gradients(f, m.params()));
}

/// Full pose model (encoder, two LSTM layers, head) over six frames.
inline ad::GradCheckResult pose_gradient_case(std::uint64_t seed) {
  model::PoseModel m(small_pose(seed));
  std::mt19937_64 rng(seed + 11);
  // At the Glorot scale the recurrent weights of this tiny model receive
  // gradients near 1e-9, below what central differences resolve.
  for (auto& [name, v] : m.params().items()) {
    const auto fresh = random_vector(rng, v.size(), 0.5);
    std::copy(fresh.begin(), fresh.end(), v.mutable_data().begin());
  }
  const auto mels = random_mels(rng, 6, m.config());
  const auto target = random_vector(rng, 6 * 3, 0.1);
  const ad::LossFn f = [&] {
    auto state = m.zero_state();
    const auto enc = m.encode(mels);
    return ad::square_sum(ad::sub(m.recurrent(enc, state), ad::Value::constant({6, 3}, target)));
  };
  return ad::compare_gradients(f, m.params(), ad::analytic_gradients(f, m.params()));
}

}  // namespace hava::test
