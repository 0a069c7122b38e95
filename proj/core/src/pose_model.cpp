// SPDX-License-Identifier: Apache-2.0
#include "hava/pose_model.hpp"

#include <cmath>
#include <random>

namespace hava::model {

using ad::Shape;
using ad::Value;

namespace {

std::string idx(const char* prefix, std::size_t i, const char* suffix) {
  return std::string(prefix) + std::to_string(i) + suffix;
}

}  // namespace

void PoseConfig::validate() const {
  require(mel_bins >= 1 && mel_frames >= 1, "pose config: mel_bins and mel_frames must be >= 1");
  require(lstm_layers == 2, "pose config: lstm_layers must be 2");
  require(lstm_hidden >= 1, "pose config: lstm_hidden must be >= 1");
  require(chunk_len >= 1, "pose config: chunk_len must be >= 1");
  require(leaky_slope > 0 && leaky_slope < 1, "pose config: leaky_slope must lie in (0, 1)");
  for (auto c : conv_channels) require(c >= 1, "pose config: conv_channels entries must be >= 1");
  for (auto s : conv_strides) require(s >= 1, "pose config: conv_strides entries must be >= 1");
  std::size_t len = mel_frames;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    if (len + 2 * kPadding < kKernel) {
      throw std::invalid_argument("pose config: mel_frames " + std::to_string(mel_frames) +
                                  " too short for the stride schedule at conv " + std::to_string(i));
    }
    len = ad::conv_output_length(len, kKernel, conv_strides[i], kPadding);
  }
}

std::size_t PoseConfig::encoding_width() const {
  std::size_t len = mel_frames;
  for (auto s : conv_strides) len = ad::conv_output_length(len, kKernel, s, kPadding);
  return conv_channels.back() * len;
}

PoseState PoseState::detached() const {
  PoseState out;
  for (std::size_t l = 0; l < layers.size(); ++l) out.layers[l] = {layers[l].h.detach(), layers[l].c.detach()};
  return out;
}

std::vector<std::pair<std::string, Shape>> pose_parameter_shapes(const PoseConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = c.mel_bins;
  for (std::size_t i = 0; i < c.conv_channels.size(); ++i) {
    out.emplace_back(idx("psm.conv", i, ".weight"), Shape{c.conv_channels[i], in, PoseConfig::kKernel});
    out.emplace_back(idx("psm.conv", i, ".bias"), Shape{c.conv_channels[i]});
    in = c.conv_channels[i];
  }
  in = c.encoding_width();
  const std::size_t h = c.lstm_hidden;
  for (std::size_t l = 0; l < 2; ++l) {
    out.emplace_back(idx("psm.lstm", l, ".w_ih"), Shape{in, 4 * h});
    out.emplace_back(idx("psm.lstm", l, ".w_hh"), Shape{h, 4 * h});
    out.emplace_back(idx("psm.lstm", l, ".bias"), Shape{4 * h});
    in = h;
  }
  out.emplace_back("psm.head.weight", Shape{h, 3});
  out.emplace_back("psm.head.bias", Shape{3});
  return out;
}

PoseModel::PoseModel(const PoseConfig& config) : config_(config), params_(config.seed) {
  config_.validate();
  init_params();
}

PoseModel::PoseModel(const PoseConfig& config, ad::ParameterSet params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  check_params();
}

void PoseModel::init_params() {
  std::mt19937_64 rng(config_.seed);
  const std::size_t h = config_.lstm_hidden;
  for (const auto& [name, shape] : pose_parameter_shapes(config_)) {
    if (name.ends_with(".bias")) {
      std::vector<double> b(ad::shape_size(shape), 0.0);
      if (name.starts_with("psm.lstm")) {
        for (std::size_t j = h; j < 2 * h; ++j) b[j] = 1.0;  // forget gate
      }
      params_.add(name, Value::parameter(shape, std::move(b)));
    } else if (shape.size() == 3) {
      params_.add(name, ad::glorot_uniform(rng, shape, shape[1] * shape[2], shape[0] * shape[2]));
    } else {
      params_.add(name, ad::glorot_uniform(rng, shape, shape[0], shape[1]));
    }
  }
}

void PoseModel::check_params() const {
  for (const auto& [name, shape] : pose_parameter_shapes(config_)) {
    if (!params_.contains(name)) throw std::invalid_argument("pose parameters: missing '" + name + "'");
    const auto& v = params_.get(name);
    if (v.shape() != shape) {
      throw std::invalid_argument("pose parameters: '" + name + "' has shape " + ad::shape_string(v.shape()) +
                                  ", config expects " + ad::shape_string(shape));
    }
  }
}

PoseState PoseModel::zero_state() const {
  PoseState s;
  for (auto& layer : s.layers) layer = {Value::zeros({1, config_.lstm_hidden}), Value::zeros({1, config_.lstm_hidden})};
  return s;
}

Value PoseModel::encode(std::span<const Matrix> mels) const {
  const std::size_t f = config_.mel_bins, l = config_.mel_frames;
  std::vector<double> data;
  data.reserve(mels.size() * f * l);
  for (const auto& m : mels) {
    if (m.rows() != f || m.cols() != l) {
      throw std::invalid_argument("mel patch is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                  ", pose model expects " + std::to_string(f) + "x" + std::to_string(l));
    }
    data.insert(data.end(), m.data().begin(), m.data().end());
  }
  Value x = Value::constant({mels.size(), f, l}, std::move(data));
  for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
    x = ad::leaky_relu(ad::conv1d(x, p(idx("psm.conv", i, ".weight")), p(idx("psm.conv", i, ".bias")),
                                  config_.conv_strides[i], PoseConfig::kPadding),
                       config_.leaky_slope);
  }
  return ad::reshape(x, {mels.size(), x.size() / mels.size()});
}

Value PoseModel::psm_encode(const Matrix& mel) const {
  const Value e = encode(std::span<const Matrix>(&mel, 1));
  return ad::reshape(e, {e.size()});
}

Value PoseModel::recurrent(const Value& encodings, PoseState& state) const {
  std::vector<Value> outputs;
  outputs.reserve(encodings.dim(0));
  for (std::size_t t = 0; t < encodings.dim(0); ++t) {
    Value x = ad::slice_rows(encodings, t, 1);
    for (std::size_t l = 0; l < 2; ++l) {
      state.layers[l] = ad::lstm_cell(x, state.layers[l], p(idx("psm.lstm", l, ".w_ih")),
                                      p(idx("psm.lstm", l, ".w_hh")), p(idx("psm.lstm", l, ".bias")));
      x = state.layers[l].h;
    }
    outputs.push_back(ad::dense(x, p("psm.head.weight"), p("psm.head.bias")));
  }
  return ad::concat_rows(outputs);
}

data::PoseTrack PoseModel::predict(std::span<const Matrix> mels, std::size_t chunk) const {
  if (mels.empty()) return {};
  ad::NoGradGuard no_grad;
  const Value enc = encode(mels);
  PoseState state = zero_state();
  std::vector<double> raw;
  raw.reserve(mels.size() * 3);
  for (std::size_t start = 0; start < mels.size(); start += chunk) {
    const std::size_t n = std::min(chunk, mels.size() - start);
    const Value r = recurrent(ad::slice_rows(enc, start, n), state);
    raw.insert(raw.end(), r.data().begin(), r.data().end());
  }
  data::PoseTrack track(mels.size());
  for (std::size_t i = 0; i < track.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) track[i][k] = raw[3 * i + k] - raw[k];
  return track;
}

data::PoseTrack PoseModel::predict_pose_track(std::span<const Matrix> mels) const {
  return predict(mels, config_.chunk_len);
}

data::PoseTrack PoseModel::predict_pose_track_single_pass(std::span<const Matrix> mels) const {
  return predict(mels, std::max<std::size_t>(mels.size(), 1));
}

std::vector<double> pose_magnitude_track(const data::PoseTrack& track) {
  std::vector<double> out;
  out.reserve(track.size());
  for (const auto& p : track) out.push_back(std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
  return out;
}

}  // namespace hava::model
