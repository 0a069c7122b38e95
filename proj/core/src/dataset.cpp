// SPDX-License-Identifier: Apache-2.0
#include "hava/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hava/container.hpp"

namespace hava::data {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// The volatile store keeps GCC 11's SLP vectorizer from folding the
// double -> float -> double round trip away at -O3.
double to_f32(double v) {
  volatile float f = static_cast<float>(v);
  return static_cast<double>(f);
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Gaussian smoothing along time with clamped edges, then rescaled to zero
// mean and unit variance.
std::vector<double> smooth_standardize(std::vector<double> x, double sigma) {
  const auto half = static_cast<long long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel;
  double total = 0.0;
  for (long long k = -half; k <= half; ++k) {
    kernel.push_back(std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma)));
    total += kernel.back();
  }
  for (auto& w : kernel) w /= total;
  const auto n = static_cast<long long>(x.size());
  std::vector<double> y(x.size(), 0.0);
  for (long long i = 0; i < n; ++i) {
    for (long long k = -half; k <= half; ++k) {
      y[static_cast<std::size_t>(i)] += kernel[static_cast<std::size_t>(k + half)] *
                                        x[static_cast<std::size_t>(std::clamp(i + k, 0LL, n - 1))];
    }
  }
  double mean = 0.0, var = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  for (double v : y) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& v : y) v = sd > 0 ? (v - mean) / sd : 0.0;
  return y;
}

}  // namespace

PoseTrack Dataset::poses() const {
  PoseTrack track;
  track.reserve(samples.size());
  for (const auto& s : samples) track.push_back(s.gt_pose);
  return track;
}

PoseTrack parse_pose_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "frame,rx,ry,rz") {
    throw std::runtime_error(source + ": missing pose CSV header 'frame,rx,ry,rz'");
  }
  PoseTrack track;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 4) {
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    long long frame = -1;
    {
      const auto& f = fields[0];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), frame);
      if (ec != std::errc() || p != f.data() + f.size()) {
        throw std::runtime_error(source + ":" + std::to_string(lineno) + ": non-numeric frame index '" + f + "'");
      }
    }
    if (frame != static_cast<long long>(track.size())) {
      throw std::runtime_error(source + ":" + std::to_string(lineno) + ": frame " + std::to_string(frame) +
                               " breaks contiguity (expected " + std::to_string(track.size()) + ")");
    }
    mesh::RotationVector p{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), p[k]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(p[k])) {
        throw std::runtime_error(source + ":" + std::to_string(lineno) + ": non-numeric pose field '" + f + "'");
      }
    }
    track.push_back(p);
  }
  return track;
}

PoseTrack read_pose_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open pose CSV " + path.string());
  return parse_pose_csv(in, path.string());
}

void write_pose_csv(const PoseTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write pose CSV " + path.string());
  out << "frame,rx,ry,rz\n";
  char buf[128];
  for (std::size_t i = 0; i < track.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g\n", i, track[i][0], track[i][1], track[i][2]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Matrix synthetic_features(std::uint64_t seed, std::size_t frames, std::size_t dim) {
  auto rng = make_rng(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&] {
    std::vector<double> v(frames);
    for (auto& x : v) x = normal(rng);
    return v;
  };
  // A shared slow latent drives every channel; per-channel noise is faster.
  const auto latent = smooth_standardize(draw(), 4.0);
  Matrix feats(frames, dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const auto noise = smooth_standardize(draw(), 2.0);
    for (std::size_t t = 0; t < frames; ++t) feats(t, k) = to_f32(latent[t] + 0.5 * noise[t]);
  }
  return feats;
}

Matrix synthetic_displacement_basis(std::uint64_t seed, const Matrix& template_vertices, double max_norm) {
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  struct Wave {
    std::array<double, 3> freq, amp;
    double phase;
  };
  std::array<Wave, 3> waves{};
  for (auto& w : waves) {
    for (auto& f : w.freq) f = 2.0 * uni(rng);
    for (auto& a : w.amp) a = uni(rng);
    w.phase = std::numbers::pi * uni(rng);
  }
  const std::size_t n = template_vertices.rows();
  Matrix basis(n, 3);
  double largest = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    const auto row = template_vertices.row(v);
    const double len = std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
    std::array<double, 3> u{row[0] / len, row[1] / len, row[2] / len};
    for (const auto& w : waves) {
      const double s = std::sin(w.freq[0] * u[0] + w.freq[1] * u[1] + w.freq[2] * u[2] + w.phase);
      for (std::size_t k = 0; k < 3; ++k) basis(v, k) += w.amp[k] * s;
    }
    const auto b = basis.row(v);
    largest = std::max(largest, std::sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2]));
  }
  for (double& x : basis.data()) x = largest > 0 ? x * max_norm / largest : 0.0;
  return basis;
}

mesh::RotationVector synthetic_pose(std::size_t frame, std::size_t frames, const SynthConfig& cfg) {
  const double phase = 2.0 * std::numbers::pi * static_cast<double>(frame) / static_cast<double>(frames);
  return {to_f32(cfg.pose_amplitude_x * std::sin(phase)), to_f32(cfg.pose_amplitude_y * std::sin(2.0 * phase)),
          0.0};
}

Matrix synthetic_vertices(const Matrix& template_vertices, const Matrix& basis, const Matrix& speech_window) {
  double mean = 0.0;
  for (double x : speech_window.data()) mean += x;
  mean /= static_cast<double>(speech_window.size());
  const double g = std::tanh(mean);
  Matrix y(template_vertices.rows(), 3);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = to_f32(template_vertices.data()[i] + basis.data()[i] * g);
  return y;
}

audio::Waveform synthetic_waveform(std::uint64_t seed, std::size_t frames, const SynthConfig& cfg) {
  const double duration = static_cast<double>(frames) / cfg.fps;
  const auto count = static_cast<std::size_t>(std::llround(duration * cfg.sample_rate));
  auto rng = make_rng(seed, 3);
  std::normal_distribution<double> normal(0.0, 0.005);
  constexpr std::array<double, 4> tones{400.0, 1200.0, 2500.0, 4000.0};
  audio::Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(count);
  for (std::size_t s = 0; s < count; ++s) {
    const double t = static_cast<double>(s) / cfg.sample_rate;
    const double theta = 2.0 * std::numbers::pi * t / duration;
    const std::array<double, 4> amp{0.1 * (1.2 + std::sin(theta)), 0.1 * (1.2 + std::cos(theta)),
                                    0.1 * (1.2 + std::sin(2 * theta)), 0.1 * (1.2 + std::cos(2 * theta))};
    double x = normal(rng);
    for (std::size_t k = 0; k < tones.size(); ++k) x += amp[k] * std::sin(2.0 * std::numbers::pi * tones[k] * t);
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    w.samples[s] = q / 32768.0;
  }
  return w;
}

namespace {

mesh::RegionMask angular_band(const mesh::TemplateMesh& m, std::string name, std::array<double, 3> anchor,
                              double max_angle_deg) {
  const double cos_limit = std::cos(max_angle_deg * std::numbers::pi / 180.0);
  const auto c = mesh::centroid(m.vertices);
  mesh::RegionMask mask{std::move(name), {}};
  double best = -2.0;
  std::uint32_t best_v = 0;
  for (std::uint32_t v = 0; v < m.vertex_count(); ++v) {
    std::array<double, 3> d{m.vertices(v, 0) - c[0], m.vertices(v, 1) - c[1], m.vertices(v, 2) - c[2]};
    const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    const double cosang = len > 0 ? (d[0] * anchor[0] + d[1] * anchor[1] + d[2] * anchor[2]) / len : -1.0;
    if (cosang >= cos_limit) mask.indices.push_back(v);
    if (cosang > best) {
      best = cosang;
      best_v = v;
    }
  }
  if (mask.indices.empty()) mask.indices.push_back(best_v);
  return mask;
}

std::array<double, 3> direction(double elevation_deg) {
  const double e = elevation_deg * std::numbers::pi / 180.0;
  return {std::cos(e), 0.0, std::sin(e)};
}

}  // namespace

mesh::RegionMask synthetic_lip_mask(const mesh::TemplateMesh& mesh) {
  return angular_band(mesh, "lips", direction(-30.0), 35.0);
}

mesh::RegionMask synthetic_eye_mask(const mesh::TemplateMesh& mesh) {
  return angular_band(mesh, "eyes", direction(25.0), 30.0);
}

Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_vertices, std::size_t n_frames,
                                   const SynthConfig& cfg) {
  require(n_vertices >= 12, "generate_synthetic_dataset: need at least 12 vertices");
  require(n_frames >= 2, "generate_synthetic_dataset: need at least 2 frames");
  require(cfg.feature_dim >= 1 && cfg.window >= 1, "generate_synthetic_dataset: feature dims must be positive");

  Dataset ds;
  ds.fps = cfg.fps;
  ds.poses_present = true;
  ds.template_mesh = mesh::make_icosphere(n_vertices, cfg.radius_mm);
  for (double& x : ds.template_mesh.vertices.data()) x = to_f32(x);
  ds.features = synthetic_features(seed, n_frames, cfg.feature_dim);

  const auto basis = synthetic_displacement_basis(seed, ds.template_mesh.vertices, cfg.max_displacement_mm);
  const auto wave = synthetic_waveform(seed, n_frames, cfg);
  const audio::MelExtractor mel(cfg.mel, wave.sample_rate);
  auto windows = audio::slice_feature_windows(ds.features, cfg.window);

  ds.samples.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    auto& s = ds.samples[i];
    s.frame = i;
    s.gt_vertices = synthetic_vertices(ds.template_mesh.vertices, basis, windows[i].window);
    s.gt_pose = synthetic_pose(i, n_frames, cfg);
    s.speech_window = std::move(windows[i]);
    s.mel = mel.patch(wave, i, cfg.fps);
    for (double& x : s.mel.patch.data()) x = to_f32(x);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  mesh::write_obj(ds.template_mesh.vertices, ds.template_mesh.faces, dir / "template.obj");

  const auto t = static_cast<std::uint32_t>(ds.frame_count());
  require(t >= 1, "save_dataset: dataset has no frames");
  const auto n = static_cast<std::uint32_t>(ds.template_mesh.vertex_count());
  const auto& mel0 = ds.samples.front().mel.patch;

  io::TensorContainer c;
  c.add("features", {static_cast<std::uint32_t>(ds.features.rows()), static_cast<std::uint32_t>(ds.features.cols())},
        ds.features.data());
  std::vector<double> verts, poses, mels;
  verts.reserve(static_cast<std::size_t>(t) * n * 3);
  for (const auto& s : ds.samples) {
    verts.insert(verts.end(), s.gt_vertices.data().begin(), s.gt_vertices.data().end());
    poses.insert(poses.end(), s.gt_pose.begin(), s.gt_pose.end());
    mels.insert(mels.end(), s.mel.patch.data().begin(), s.mel.patch.data().end());
  }
  c.add("vertices", {t, n, 3}, std::move(verts));
  if (ds.poses_present) c.add("poses", {t, 3}, std::move(poses));
  c.add("mel", {t, static_cast<std::uint32_t>(mel0.rows()), static_cast<std::uint32_t>(mel0.cols())},
        std::move(mels));
  c.add("meta", {1}, {ds.fps});
  io::write_container(c, dir / "data.hava");
}

Dataset load_dataset(const std::filesystem::path& dir, std::size_t window) {
  Dataset ds;
  ds.template_mesh = mesh::build_adjacency(mesh::load_obj(dir / "template.obj"));
  const auto c = io::read_container(dir / "data.hava");
  auto need = [&](const char* name) -> const io::TensorEntry& {
    const auto* e = c.find(name);
    if (e == nullptr) throw std::runtime_error(dir.string() + "/data.hava: missing mandatory entry '" + name + "'");
    return *e;
  };
  const auto& feats = need("features");
  const auto& verts = need("vertices");
  const auto& mel = need("mel");
  const auto& meta = need("meta");
  auto mismatch = [&](const std::string& what) {
    return std::runtime_error(dir.string() + "/data.hava: shape mismatch: " + what);
  };
  if (feats.dims.size() != 2) throw mismatch("'features' must be T x D");
  const std::size_t t = feats.dims[0], d = feats.dims[1];
  const std::size_t n = ds.template_mesh.vertex_count();
  if (verts.dims.size() != 3 || verts.dims[0] != t || verts.dims[2] != 3) throw mismatch("'vertices' must be T x N x 3");
  if (verts.dims[1] != n) {
    throw mismatch("'vertices' has N=" + std::to_string(verts.dims[1]) + " but template has N=" + std::to_string(n));
  }
  if (mel.dims.size() != 3 || mel.dims[0] != t) throw mismatch("'mel' must be T x F x L");
  const auto* poses = c.find("poses");
  if (poses != nullptr && (poses->dims.size() != 2 || poses->dims[0] != t || poses->dims[1] != 3)) {
    throw mismatch("'poses' must be T x 3");
  }
  ds.fps = meta.values.at(0);
  require(ds.fps > 0, "load_dataset: fps must be positive");
  ds.features = Matrix(t, d, feats.values);
  ds.poses_present = poses != nullptr;

  const std::size_t f = mel.dims[1], l = mel.dims[2];
  auto windows = audio::slice_feature_windows(ds.features, window);
  ds.samples.resize(t);
  for (std::size_t i = 0; i < t; ++i) {
    auto& s = ds.samples[i];
    s.frame = i;
    s.gt_vertices = Matrix(n, 3, std::vector<double>(verts.values.begin() + static_cast<std::ptrdiff_t>(i * n * 3),
                                                     verts.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * n * 3)));
    if (poses != nullptr) s.gt_pose = {poses->values[3 * i], poses->values[3 * i + 1], poses->values[3 * i + 2]};
    s.speech_window = std::move(windows[i]);
    s.mel.center_frame = i;
    s.mel.patch = Matrix(f, l, std::vector<double>(mel.values.begin() + static_cast<std::ptrdiff_t>(i * f * l),
                                                   mel.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * f * l)));
  }
  return ds;
}

}  // namespace hava::data
