// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "hava/matrix.hpp"

namespace hava::audio {

/// Mono samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

struct MelConfig {
  std::size_t n_fft = 1024;
  std::size_t hop = 256;
  std::size_t n_mels = 80;   // F
  std::size_t frames = 16;   // L
  double fmin = 0.0;
  double fmax = 8000.0;
};

inline constexpr double kLogFloor = 1e-10;

/// F x L log10 mel power for one video frame.
struct MelPatch {
  Matrix patch;
  std::size_t center_frame = 0;
};

/// W x D slice of the speech feature sequence centered on one video frame.
struct SpeechFeatureWindow {
  Matrix window;
  std::size_t center_frame = 0;
};

class AudioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Waveform parse_wav(std::span<const std::uint8_t> bytes);
Waveform read_wav(const std::filesystem::path& path);
/// Writes 16-bit mono PCM; samples are scaled by 32768 and clamped.
void write_wav(const Waveform& wave, const std::filesystem::path& path);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

/// Forward DFT. Power-of-two lengths use an iterative radix-2 transform,
/// other lengths fall back to the direct O(n^2) sum.
std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x);

/// F x (n_fft/2 + 1) triangular filters on the HTK mel scale.
Matrix mel_filterbank(const MelConfig& cfg, double sample_rate);

/// Precomputes the analysis window and filterbank for repeated patch
/// extraction from one waveform.
class MelExtractor {
 public:
  MelExtractor(const MelConfig& cfg, double sample_rate);

  const MelConfig& config() const noexcept { return cfg_; }
  const Matrix& filterbank() const noexcept { return filterbank_; }

  /// One-sided power spectrum of the Hann-windowed segment starting at
  /// `start` (may be negative or run past the end; missing samples are zero).
  std::vector<double> power_column(std::span<const double> samples, long long start) const;

  MelPatch patch(const Waveform& wave, std::size_t frame, double fps) const;

 private:
  MelConfig cfg_;
  double sample_rate_;
  std::vector<double> window_;
  Matrix filterbank_;
};

MelPatch mel_patch(const Waveform& wave, std::size_t frame, double fps, const MelConfig& cfg);

/// Patches for frames 0..count-1.
std::vector<MelPatch> mel_patches(const Waveform& wave, std::size_t count, double fps, const MelConfig& cfg);

/// Window rows i-ceil(W/2)+1 .. i+floor(W/2), edge-replicated.
SpeechFeatureWindow feature_window(const Matrix& sequence, std::size_t frame, std::size_t window);
std::vector<SpeechFeatureWindow> slice_feature_windows(const Matrix& sequence, std::size_t window);

/// Adds seeded zero-mean Gaussian noise at the requested SNR and clips to
/// [-1, 1]. A non-finite (+inf) snr_db returns the input unchanged.
Waveform add_gaussian_noise(const Waveform& wave, double snr_db, std::uint64_t seed);

}  // namespace hava::audio
