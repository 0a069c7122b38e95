// SPDX-License-Identifier: Apache-2.0
#include "hava/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hava::config {

namespace {

template <class F>
void visit(model::AnimationConfig& c, F&& f) {
  f("window", c.window);
  f("feature_dim", c.feature_dim);
  f("bands", c.bands);
  f("alm_channels", c.alm_channels);
  f("alm_mlp_hidden", c.alm_mlp_hidden);
  f("local_dim", c.local_dim);
  f("agm_channels", c.agm_channels);
  f("agm_strides", c.agm_strides);
  f("agm_mlp_hidden", c.agm_mlp_hidden);
  f("global_dim", c.global_dim);
  f("gcn_width", c.gcn_width);
  f("gcn_layers", c.gcn_layers);
  f("gcn_init_gain", c.gcn_init_gain);
  f("leaky_slope", c.leaky_slope);
  f("seed", c.seed);
}

template <class F>
void visit(model::PoseConfig& c, F&& f) {
  f("mel_bins", c.mel_bins);
  f("mel_frames", c.mel_frames);
  f("conv_channels", c.conv_channels);
  f("conv_strides", c.conv_strides);
  f("lstm_hidden", c.lstm_hidden);
  f("lstm_layers", c.lstm_layers);
  f("chunk_len", c.chunk_len);
  f("leaky_slope", c.leaky_slope);
  f("seed", c.seed);
}

template <class F>
void visit(audio::MelConfig& c, F&& f) {
  f("n_fft", c.n_fft);
  f("hop", c.hop);
  f("n_mels", c.n_mels);
  f("frames", c.frames);
  f("fmin", c.fmin);
  f("fmax", c.fmax);
}

std::vector<double> flatten(double v) { return {v}; }
template <class T>
  requires std::is_integral_v<T>
std::vector<double> flatten(T v) {
  return {static_cast<double>(v)};
}
template <std::size_t N>
std::vector<double> flatten(const std::array<std::size_t, N>& a) {
  return std::vector<double>(a.begin(), a.end());
}

template <class T>
T as_count(const std::string& key, double v) {
  if (!(v >= 0) || v != std::floor(v) || v > 9.0e15) {
    throw std::invalid_argument("config '" + key + "': expected a non-negative integer, got " + std::to_string(v));
  }
  return static_cast<T>(v);
}

void assign(const std::string& key, const std::vector<double>& v, double& out) {
  require(v.size() == 1, "config '" + key + "': expected one value");
  out = v[0];
}
template <class T>
  requires std::is_integral_v<T>
void assign(const std::string& key, const std::vector<double>& v, T& out) {
  require(v.size() == 1, "config '" + key + "': expected one value");
  out = as_count<T>(key, v[0]);
}
template <std::size_t N>
void assign(const std::string& key, const std::vector<double>& v, std::array<std::size_t, N>& out) {
  if (v.size() != N) {
    throw std::invalid_argument("config '" + key + "': expected " + std::to_string(N) + " values, got " +
                                std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < N; ++i) out[i] = as_count<std::size_t>(key, v[i]);
}

template <class C>
Entries collect(C cfg) {
  Entries out;
  visit(cfg, [&](const char* name, const auto& field) { out[name] = flatten(field); });
  return out;
}

template <class C>
C restore(const Entries& entries, C cfg) {
  visit(cfg, [&](const char* name, auto& field) {
    if (auto it = entries.find(name); it != entries.end()) assign(name, it->second, field);
  });
  return cfg;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class C>
bool apply_one(C& cfg, const std::string& key, const std::string& text) {
  bool hit = false;
  visit(cfg, [&](const char* name, auto& field) {
    if (key == name) {
      assign(key, parse_numbers(key, text), field);
      hit = true;
    }
  });
  return hit;
}

}  // namespace

Entries to_entries(const model::AnimationConfig& cfg) { return collect(cfg); }
Entries to_entries(const model::PoseConfig& cfg) { return collect(cfg); }
Entries to_entries(const audio::MelConfig& cfg) { return collect(cfg); }

model::AnimationConfig animation_from(const Entries& entries, model::AnimationConfig base) {
  return restore(entries, base);
}
model::PoseConfig pose_from(const Entries& entries, model::PoseConfig base) { return restore(entries, base); }
audio::MelConfig mel_from(const Entries& entries, audio::MelConfig base) { return restore(entries, base); }

std::vector<double> parse_numbers(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
      throw std::invalid_argument("config '" + key + "': '" + text + "' is not a number list");
    }
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("config '" + key + "': empty value");
  return out;
}

std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  return parse_key_values(in, path.string());
}

std::vector<std::string> apply(const std::map<std::string, std::string>& settings, model::AnimationConfig& anim,
                               model::PoseConfig& pose, audio::MelConfig& mel) {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : settings) {
    bool hit = false;
    if (key.starts_with("anim.")) {
      hit = apply_one(anim, key.substr(5), value);
    } else if (key.starts_with("pose.")) {
      hit = apply_one(pose, key.substr(5), value);
    } else if (key.starts_with("mel.")) {
      hit = apply_one(mel, key.substr(4), value);
    }
    if (!hit) unknown.push_back(key);
  }
  return unknown;
}

}  // namespace hava::config
