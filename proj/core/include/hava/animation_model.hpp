// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hava/audio.hpp"
#include "hava/layers.hpp"
#include "hava/mesh.hpp"

namespace hava::model {

/// Stage-1 widths. Kernel/stride of the local encoder are fixed at (4, 1),
/// the global encoder uses kernel 3 with `agm_strides`.
struct AnimationConfig {
  std::size_t window = 16;       // W
  std::size_t feature_dim = 29;  // D
  std::size_t bands = 8;         // K, embedding width 2K
  std::array<std::size_t, 5> alm_channels{32, 32, 64, 64, 64};
  std::array<std::size_t, 3> alm_mlp_hidden{64, 64, 64};
  std::size_t local_dim = 64;
  std::array<std::size_t, 4> agm_channels{32, 64, 64, 64};
  std::array<std::size_t, 4> agm_strides{2, 1, 1, 1};
  std::size_t agm_mlp_hidden = 64;
  std::size_t global_dim = 64;
  std::size_t gcn_width = 128;  // H
  std::size_t gcn_layers = 8;
  /// Multiplies the Glorot limit of the dense sublayer inside each graph
  /// layer. Sum aggregation over ~6 neighbors otherwise compounds the
  /// activation scale layer after layer.
  double gcn_init_gain = 0.1;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  static constexpr std::size_t kAlmKernel = 4;
  static constexpr std::size_t kAlmStride = 1;
  static constexpr std::size_t kAgmKernel = 3;

  /// Throws std::invalid_argument when the widths are unusable or the
  /// window is too short for the valid convolutions.
  void validate() const;
  std::size_t fused_width() const { return local_dim + global_dim + 2 * bands; }
};

class AnimationModel {
 public:
  AnimationModel(const AnimationConfig& config, std::size_t vertex_count);
  /// Adopts an existing parameter set (e.g. from a checkpoint); shapes are
  /// checked against the config.
  AnimationModel(const AnimationConfig& config, std::size_t vertex_count, ad::ParameterSet params);

  const AnimationConfig& config() const noexcept { return config_; }
  std::size_t vertex_count() const noexcept { return vertex_count_; }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }
  /// N x 2K Fourier embedding of the vertex indices.
  const ad::Value& embedding() const noexcept { return embedding_; }

  /// Stacks W x D windows into the [B x D x W] encoder input.
  ad::Value window_batch(std::span<const Matrix> windows) const;

  /// [B x D x W] -> [B*N x local_dim]
  ad::Value alm_forward(const ad::Value& windows) const;
  /// [B x D x W] -> [B x global_dim]
  ad::Value agm_forward(const ad::Value& windows) const;
  /// [B*N x local], [B x global] -> [B*N x local + global + 2K]
  ad::Value assemble_features(const ad::Value& local, const ad::Value& global) const;
  /// [B*N x fused] -> [B*N x 3] displacements in mm.
  ad::Value fsm_forward(const ad::Value& fused, const mesh::TemplateMesh& mesh) const;

  /// Per-vertex displacement rows for a batch of windows, frame-major.
  ad::Value displacements(std::span<const Matrix> windows, const mesh::TemplateMesh& mesh) const;

  /// template + displacement for one window; pure.
  Matrix predict_frame(const mesh::TemplateMesh& mesh, const Matrix& window) const;

 private:
  void init_params();
  void check_params() const;
  const ad::Value& p(const std::string& name) const { return params_.get(name); }

  AnimationConfig config_;
  std::size_t vertex_count_;
  ad::ParameterSet params_;
  ad::Value embedding_;
};

/// Expected shape of every parameter, in creation order.
std::vector<std::pair<std::string, ad::Shape>> animation_parameter_shapes(const AnimationConfig& config);

}  // namespace hava::model
