// SPDX-License-Identifier: Apache-2.0
#include "hava/augmentation.hpp"

#include <array>
#include <cmath>
#include <numeric>
#include <random>

namespace hava::augment {

std::vector<double> gaussian_kernel(double sigma, std::size_t window) {
  require(sigma > 0 && std::isfinite(sigma), "gaussian_kernel: sigma must be positive");
  if (window == 0 || window % 2 == 0) {
    throw std::invalid_argument("gaussian_kernel: window must be odd, got " + std::to_string(window));
  }
  const long half = static_cast<long>(window / 2);
  std::vector<double> k(window);
  for (long i = -half; i <= half; ++i) {
    k[static_cast<std::size_t>(i + half)] = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
  }
  const double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= sum;
  return k;
}

namespace {

// Reflect (mirror without repeating the edge sample): -1 -> 1, T -> T-2.
std::size_t reflect(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

}  // namespace

data::PoseTrack gaussian_filter(const data::PoseTrack& track, double sigma, std::size_t window) {
  const auto k = gaussian_kernel(sigma, window);
  const long half = static_cast<long>(window / 2);
  const long n = static_cast<long>(track.size());
  data::PoseTrack out(track.size());
  for (long i = 0; i < n; ++i) {
    mesh::RotationVector acc{0, 0, 0};
    for (long j = -half; j <= half; ++j) {
      const auto& p = track[reflect(i + j, n)];
      const double w = k[static_cast<std::size_t>(j + half)];
      for (std::size_t c = 0; c < 3; ++c) acc[c] += w * p[c];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

data::PoseTrack gaussian_smooth(const data::PoseTrack& track, double sigma, std::size_t window) {
  data::PoseTrack out = gaussian_filter(track, sigma, window);
  if (out.empty()) return out;
  const auto origin = out.front();
  for (auto& p : out)
    for (std::size_t c = 0; c < 3; ++c) p[c] -= origin[c];
  return out;
}

data::Dataset attach_poses(data::Dataset ds, const data::PoseTrack& track) {
  if (track.size() != ds.frame_count()) {
    throw std::invalid_argument("attach_poses: pose track has " + std::to_string(track.size()) +
                                " frames, dataset has " + std::to_string(ds.frame_count()));
  }
  for (std::size_t i = 0; i < track.size(); ++i) ds.samples[i].gt_pose = track[i];
  ds.poses_present = true;
  return ds;
}

std::vector<Matrix> noisy_mels(const audio::Waveform& wave, const audio::MelConfig& mel, std::size_t frames,
                               double fps, double snr_db, std::uint64_t seed) {
  const auto noisy = audio::add_gaussian_noise(wave, snr_db, seed);
  const audio::MelExtractor extractor(mel, wave.sample_rate);
  std::vector<Matrix> out;
  out.reserve(frames);
  for (std::size_t i = 0; i < frames; ++i) out.push_back(extractor.patch(noisy, i, fps).patch);
  return out;
}

std::vector<std::vector<Matrix>> noise_variants(const data::Dataset& ds, const audio::Waveform& wave,
                                                const audio::MelConfig& mel, std::size_t count, double snr_db,
                                                std::uint64_t seed) {
  const double audio_frames =
      count == 0 ? 0.0 : static_cast<double>(wave.samples.size()) * ds.fps / wave.sample_rate;
  if (count > 0 && std::abs(audio_frames - static_cast<double>(ds.frame_count())) > 1.0) {
    throw std::invalid_argument("noise_variants: audio covers " + std::to_string(audio_frames) +
                                " frames, dataset has " + std::to_string(ds.frame_count()));
  }
  std::vector<Matrix> clean;
  clean.reserve(ds.frame_count());
  for (const auto& s : ds.samples) clean.push_back(s.mel.patch);
  std::vector<std::vector<Matrix>> out{clean};
  for (std::size_t k = 0; k < count; ++k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    const std::uint64_t noise_seed = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    auto mels = noisy_mels(wave, mel, ds.frame_count(), ds.fps, snr_db, noise_seed);
    if (!mels.empty() && mels.front().rows() != clean.front().rows()) {
      throw std::invalid_argument("noise_variants: mel config yields " + std::to_string(mels.front().rows()) +
                                  " bins, dataset patches have " + std::to_string(clean.front().rows()));
    }
    out.push_back(std::move(mels));
    if (k + 1 < count) out.push_back(clean);
  }
  return out;
}

}  // namespace hava::augment
