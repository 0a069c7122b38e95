// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hava/dataset.hpp"
#include "hava/layers.hpp"

namespace hava::model {

/// Mel patch encoder (7 convs, kernel 3, zero padding 1) feeding a 2-layer
/// LSTM and a dense head producing one raw rotation vector per frame.
struct PoseConfig {
  std::size_t mel_bins = 80;    // F, conv input channels
  std::size_t mel_frames = 16;  // L, conv time axis
  std::array<std::size_t, 7> conv_channels{32, 32, 64, 64, 64, 64, 64};
  std::array<std::size_t, 7> conv_strides{1, 2, 1, 2, 1, 1, 1};
  std::size_t lstm_hidden = 128;
  std::size_t lstm_layers = 2;
  std::size_t chunk_len = 30;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;

  static constexpr std::size_t kKernel = 3;
  static constexpr std::size_t kPadding = 1;

  void validate() const;
  std::size_t encoding_width() const;
};

/// Recurrent state of both LSTM layers.
struct PoseState {
  std::array<ad::LstmState, 2> layers;
  /// Constant copy that cuts gradient flow into earlier chunks.
  PoseState detached() const;
};

class PoseModel {
 public:
  explicit PoseModel(const PoseConfig& config);
  PoseModel(const PoseConfig& config, ad::ParameterSet params);

  const PoseConfig& config() const noexcept { return config_; }
  ad::ParameterSet& params() noexcept { return params_; }
  const ad::ParameterSet& params() const noexcept { return params_; }

  PoseState zero_state() const;

  /// F x L patches -> [T x E] encodings.
  ad::Value encode(std::span<const Matrix> mels) const;
  /// One patch -> [E].
  ad::Value psm_encode(const Matrix& mel) const;
  /// Runs encodings [n x E] through the LSTM starting from `state` (updated in
  /// place) and returns the raw head outputs [n x 3].
  ad::Value recurrent(const ad::Value& encodings, PoseState& state) const;

  /// Frame-0-relative track: raw outputs r_i minus r_0, processed in chunks of
  /// chunk_len with the recurrent state carried across chunk boundaries.
  data::PoseTrack predict_pose_track(std::span<const Matrix> mels) const;
  /// Same as predict_pose_track but processes all frames in a single pass.
  data::PoseTrack predict_pose_track_single_pass(std::span<const Matrix> mels) const;

 private:
  void init_params();
  void check_params() const;
  const ad::Value& p(const std::string& name) const { return params_.get(name); }
  data::PoseTrack predict(std::span<const Matrix> mels, std::size_t chunk) const;

  PoseConfig config_;
  ad::ParameterSet params_;
};

std::vector<std::pair<std::string, ad::Shape>> pose_parameter_shapes(const PoseConfig& config);

/// Per-frame Euclidean norm of each rotation vector.
std::vector<double> pose_magnitude_track(const data::PoseTrack& track);

}  // namespace hava::model
