// SPDX-License-Identifier: Apache-2.0
#include "hava/animation_model.hpp"

#include <random>

namespace hava::model {

using ad::Shape;
using ad::Value;

namespace {

std::string idx(const char* prefix, std::size_t i, const char* suffix) {
  return std::string(prefix) + std::to_string(i) + suffix;
}

}  // namespace

void AnimationConfig::validate() const {
  auto positive = [](std::size_t v, const char* what) {
    require(v >= 1, std::string("animation config: ") + what + " must be >= 1");
  };
  positive(window, "window");
  positive(feature_dim, "feature_dim");
  positive(bands, "bands");
  positive(local_dim, "local_dim");
  positive(global_dim, "global_dim");
  positive(gcn_width, "gcn_width");
  positive(gcn_layers, "gcn_layers");
  positive(agm_mlp_hidden, "agm_mlp_hidden");
  for (auto c : alm_channels) positive(c, "alm_channels entries");
  for (auto c : alm_mlp_hidden) positive(c, "alm_mlp_hidden entries");
  for (auto c : agm_channels) positive(c, "agm_channels entries");
  for (auto s : agm_strides) positive(s, "agm_strides entries");
  require(leaky_slope > 0 && leaky_slope < 1, "animation config: leaky_slope must lie in (0, 1)");
  require(gcn_init_gain > 0, "animation config: gcn_init_gain must be positive");

  std::size_t len = window;
  for (std::size_t i = 0; i < alm_channels.size(); ++i) {
    if (len < kAlmKernel) {
      throw std::invalid_argument("animation config: window " + std::to_string(window) +
                                  " too short for local encoder conv " + std::to_string(i) + " (length " +
                                  std::to_string(len) + " < kernel 4)");
    }
    len = ad::conv_output_length(len, kAlmKernel, kAlmStride);
  }
  len = window;
  for (std::size_t i = 0; i < agm_channels.size(); ++i) {
    if (len < kAgmKernel) {
      throw std::invalid_argument("animation config: window " + std::to_string(window) +
                                  " too short for global encoder conv " + std::to_string(i) + " (length " +
                                  std::to_string(len) + " < kernel 3)");
    }
    len = ad::conv_output_length(len, kAgmKernel, agm_strides[i]);
  }
}

std::vector<std::pair<std::string, Shape>> animation_parameter_shapes(const AnimationConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = c.feature_dim;
  for (std::size_t i = 0; i < c.alm_channels.size(); ++i) {
    out.emplace_back(idx("alm.conv", i, ".weight"), Shape{c.alm_channels[i], in, AnimationConfig::kAlmKernel});
    out.emplace_back(idx("alm.conv", i, ".bias"), Shape{c.alm_channels[i]});
    in = c.alm_channels[i];
  }
  in = c.alm_channels.back() + 2 * c.bands;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t o = i < 3 ? c.alm_mlp_hidden[i] : c.local_dim;
    out.emplace_back(idx("alm.mlp", i, ".weight"), Shape{in, o});
    out.emplace_back(idx("alm.mlp", i, ".bias"), Shape{o});
    in = o;
  }

  in = c.feature_dim;
  std::size_t len = c.window;
  for (std::size_t i = 0; i < c.agm_channels.size(); ++i) {
    out.emplace_back(idx("agm.conv", i, ".weight"), Shape{c.agm_channels[i], in, AnimationConfig::kAgmKernel});
    out.emplace_back(idx("agm.conv", i, ".bias"), Shape{c.agm_channels[i]});
    in = c.agm_channels[i];
    len = ad::conv_output_length(len, AnimationConfig::kAgmKernel, c.agm_strides[i]);
  }
  out.emplace_back("agm.mlp0.weight", Shape{c.agm_channels.back() * len, c.agm_mlp_hidden});
  out.emplace_back("agm.mlp0.bias", Shape{c.agm_mlp_hidden});
  out.emplace_back("agm.mlp1.weight", Shape{c.agm_mlp_hidden, c.global_dim});
  out.emplace_back("agm.mlp1.bias", Shape{c.global_dim});

  out.emplace_back("fsm.in.weight", Shape{c.fused_width(), c.gcn_width});
  out.emplace_back("fsm.in.bias", Shape{c.gcn_width});
  for (std::size_t l = 0; l < c.gcn_layers; ++l) {
    out.emplace_back(idx("fsm.gc", l, ".weight"), Shape{c.gcn_width, c.gcn_width});
    out.emplace_back(idx("fsm.gc", l, ".bias"), Shape{c.gcn_width});
    out.emplace_back(idx("fsm.gc", l, ".eps"), Shape{1});
  }
  out.emplace_back("fsm.head.weight", Shape{c.gcn_width, 3});
  out.emplace_back("fsm.head.bias", Shape{3});
  return out;
}

AnimationModel::AnimationModel(const AnimationConfig& config, std::size_t vertex_count)
    : config_(config), vertex_count_(vertex_count), params_(config.seed) {
  config_.validate();
  require(vertex_count_ >= 2, "AnimationModel: need at least 2 vertices");
  embedding_ = Value::constant(mesh::vertex_embedding(vertex_count_, config_.bands));
  init_params();
}

AnimationModel::AnimationModel(const AnimationConfig& config, std::size_t vertex_count, ad::ParameterSet params)
    : config_(config), vertex_count_(vertex_count), params_(std::move(params)) {
  config_.validate();
  require(vertex_count_ >= 2, "AnimationModel: need at least 2 vertices");
  embedding_ = Value::constant(mesh::vertex_embedding(vertex_count_, config_.bands));
  check_params();
}

void AnimationModel::init_params() {
  std::mt19937_64 rng(config_.seed);
  for (const auto& [name, shape] : animation_parameter_shapes(config_)) {
    const bool is_weight = name.ends_with(".weight");
    if (!is_weight) {
      params_.add(name, Value::parameter(shape, std::vector<double>(ad::shape_size(shape), 0.0)));
      continue;
    }
    std::size_t fan_in = shape[0], fan_out = shape[1];
    if (shape.size() == 3) {
      fan_in = shape[1] * shape[2];
      fan_out = shape[0] * shape[2];
    }
    Value w = ad::glorot_uniform(rng, shape, fan_in, fan_out);
    if (name.starts_with("fsm.gc")) {
      for (double& x : w.mutable_data()) x *= config_.gcn_init_gain;
    }
    params_.add(name, std::move(w));
  }
}

void AnimationModel::check_params() const {
  for (const auto& [name, shape] : animation_parameter_shapes(config_)) {
    if (!params_.contains(name)) throw std::invalid_argument("animation parameters: missing '" + name + "'");
    const auto& v = params_.get(name);
    if (v.shape() != shape) {
      throw std::invalid_argument("animation parameters: '" + name + "' has shape " + ad::shape_string(v.shape()) +
                                  ", config expects " + ad::shape_string(shape));
    }
  }
}

Value AnimationModel::window_batch(std::span<const Matrix> windows) const {
  const std::size_t w = config_.window, d = config_.feature_dim;
  std::vector<double> data(windows.size() * d * w);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto& m = windows[b];
    if (m.rows() != w || m.cols() != d) {
      throw std::invalid_argument("speech window is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                  ", model expects " + std::to_string(w) + "x" + std::to_string(d));
    }
    for (std::size_t t = 0; t < w; ++t)
      for (std::size_t k = 0; k < d; ++k) data[(b * d + k) * w + t] = m(t, k);
  }
  return Value::constant({windows.size(), d, w}, std::move(data));
}

Value AnimationModel::alm_forward(const Value& windows) const {
  const double a = config_.leaky_slope;
  Value x = windows;
  for (std::size_t i = 0; i < config_.alm_channels.size(); ++i) {
    x = ad::leaky_relu(ad::conv1d(x, p(idx("alm.conv", i, ".weight")), p(idx("alm.conv", i, ".bias")),
                                  AnimationConfig::kAlmStride),
                       a);
  }
  const std::size_t batch = x.dim(0);
  const Value code = ad::mean_last_axis(x);  // [B x C5]
  Value h = ad::concat_cols({ad::repeat_rows(code, vertex_count_), ad::tile_rows(embedding_, batch)});
  for (std::size_t i = 0; i < 4; ++i) {
    h = ad::dense(h, p(idx("alm.mlp", i, ".weight")), p(idx("alm.mlp", i, ".bias")));
    if (i < 3) h = ad::leaky_relu(h, a);
  }
  return h;
}

Value AnimationModel::agm_forward(const Value& windows) const {
  const double a = config_.leaky_slope;
  Value x = windows;
  for (std::size_t i = 0; i < config_.agm_channels.size(); ++i) {
    x = ad::leaky_relu(ad::conv1d(x, p(idx("agm.conv", i, ".weight")), p(idx("agm.conv", i, ".bias")),
                                  config_.agm_strides[i]),
                       a);
  }
  const std::size_t batch = x.dim(0);
  Value h = ad::reshape(x, {batch, x.size() / batch});
  h = ad::leaky_relu(ad::dense(h, p("agm.mlp0.weight"), p("agm.mlp0.bias")), a);
  return ad::dense(h, p("agm.mlp1.weight"), p("agm.mlp1.bias"));
}

Value AnimationModel::assemble_features(const Value& local, const Value& global) const {
  if (local.rank() != 2 || local.dim(1) != config_.local_dim) {
    throw std::invalid_argument("assemble_features: local width " + ad::shape_string(local.shape()) +
                                " does not match local_dim " + std::to_string(config_.local_dim));
  }
  if (global.rank() != 2 || global.dim(1) != config_.global_dim) {
    throw std::invalid_argument("assemble_features: global width " + ad::shape_string(global.shape()) +
                                " does not match global_dim " + std::to_string(config_.global_dim));
  }
  const std::size_t batch = global.dim(0);
  if (local.dim(0) != batch * vertex_count_) {
    throw std::invalid_argument("assemble_features: " + std::to_string(local.dim(0)) + " local rows for " +
                                std::to_string(batch) + " frames of " + std::to_string(vertex_count_) + " vertices");
  }
  return ad::concat_cols({local, ad::repeat_rows(global, vertex_count_), ad::tile_rows(embedding_, batch)});
}

Value AnimationModel::fsm_forward(const Value& fused, const mesh::TemplateMesh& mesh) const {
  if (mesh.vertex_count() != vertex_count_ || !mesh.has_adjacency()) {
    throw std::invalid_argument("fsm_forward: mesh has " + std::to_string(mesh.vertex_count()) +
                                " vertices (adjacency " + (mesh.has_adjacency() ? "built" : "missing") +
                                "), model expects " + std::to_string(vertex_count_));
  }
  const double a = config_.leaky_slope;
  Value h = ad::dense(fused, p("fsm.in.weight"), p("fsm.in.bias"));
  for (std::size_t l = 0; l < config_.gcn_layers; ++l) {
    const Value z = ad::graph_conv(h, mesh.adjacency, p(idx("fsm.gc", l, ".weight")), p(idx("fsm.gc", l, ".bias")),
                                   p(idx("fsm.gc", l, ".eps")));
    h = ad::leaky_relu(ad::add(h, z), a);
  }
  return ad::dense(h, p("fsm.head.weight"), p("fsm.head.bias"));
}

Value AnimationModel::displacements(std::span<const Matrix> windows, const mesh::TemplateMesh& mesh) const {
  const Value x = window_batch(windows);
  return fsm_forward(assemble_features(alm_forward(x), agm_forward(x)), mesh);
}

Matrix AnimationModel::predict_frame(const mesh::TemplateMesh& mesh, const Matrix& window) const {
  ad::NoGradGuard no_grad;
  const Value disp = displacements(std::span<const Matrix>(&window, 1), mesh);
  Matrix out = mesh.vertices;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += disp.data()[i];
  return out;
}

}  // namespace hava::model
