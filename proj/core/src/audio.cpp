// SPDX-License-Identifier: Apache-2.0
#include "hava/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

namespace hava::audio {

namespace {

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace

Waveform parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw AudioError("WAV: truncated header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError("WAV: not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw AudioError("WAV: truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      std::uint16_t format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == 0xFFFE && size >= 26) format = le16(f + 24);  // extensible: sub-format GUID
      if (format != 1) throw AudioError("WAV: unsupported codec " + std::to_string(format) + " (PCM only)");
      if (bits != 16) throw AudioError("WAV: unsupported bit depth " + std::to_string(bits));
      if (channels != 1 && channels != 2) {
        throw AudioError("WAV: unsupported channel count " + std::to_string(channels));
      }
      if (rate == 0) throw AudioError("WAV: zero sample rate");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) throw AudioError("WAV: data chunk before fmt chunk");
      if (body + size > bytes.size()) throw AudioError("WAV: truncated data chunk");
      const std::size_t frame_bytes = 2u * channels;
      if (size % frame_bytes != 0) throw AudioError("WAV: truncated sample frame");
      Waveform w;
      w.sample_rate = rate;
      const std::size_t n = size / frame_bytes;
      w.samples.resize(n);
      const std::uint8_t* d = bytes.data() + body;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(le16(d + (i * channels + c) * 2)) / 32768.0;
        }
        w.samples[i] = acc / channels;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw AudioError(have_fmt ? "WAV: missing data chunk" : "WAV: missing fmt chunk");
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open WAV file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const AudioError& e) {
    throw AudioError(path.string() + ": " + e.what());
  }
}

void write_wav(const Waveform& wave, const std::filesystem::path& path) {
  require(wave.sample_rate > 0, "write_wav: sample rate must be positive");
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  const auto rate = static_cast<std::uint32_t>(std::lround(wave.sample_rate));
  put32(out, rate);
  put32(out, rate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (double s : wave.samples) {
    const long q = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw AudioError("cannot write WAV file " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x) {
  const std::size_t n = x.size();
  if (n <= 1) return x;
  if (!std::has_single_bit(n)) {
    std::vector<std::complex<double>> out(n);
    for (std::size_t k = 0; k < n; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / n);
      }
      out[k] = acc;
    }
    return out;
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto w = std::polar(1.0, ang * static_cast<double>(k));
        const auto u = x[i + k];
        const auto v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
      }
    }
  }
  return x;
}

Matrix mel_filterbank(const MelConfig& cfg, double sample_rate) {
  const std::size_t bins = cfg.n_fft / 2 + 1;
  Matrix fb(cfg.n_mels, bins);
  const double mlo = hz_to_mel(cfg.fmin), mhi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

MelExtractor::MelExtractor(const MelConfig& cfg, double sample_rate)
    : cfg_(cfg), sample_rate_(sample_rate) {
  require(cfg.n_fft > 0 && cfg.hop > 0 && cfg.n_mels > 0 && cfg.frames > 0,
          "mel config: n_fft, hop, F and L must be positive");
  require(sample_rate > 0, "mel config: sample rate must be positive");
  require(cfg.fmin >= 0 && cfg.fmin < cfg.fmax, "mel config: need 0 <= fmin < fmax");
  require(cfg.fmax <= sample_rate / 2.0, "mel config: fmax exceeds the Nyquist frequency");
  window_ = hann_window(cfg.n_fft);
  filterbank_ = mel_filterbank(cfg, sample_rate);
}

std::vector<double> MelExtractor::power_column(std::span<const double> samples, long long start) const {
  const std::size_t n = cfg_.n_fft;
  std::vector<std::complex<double>> buf(n);
  const auto total = static_cast<long long>(samples.size());
  for (std::size_t i = 0; i < n; ++i) {
    const long long idx = start + static_cast<long long>(i);
    const double s = (idx >= 0 && idx < total) ? samples[static_cast<std::size_t>(idx)] : 0.0;
    buf[i] = s * window_[i];
  }
  const auto spec = fft(std::move(buf));
  std::vector<double> power(n / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(spec[k]);
  return power;
}

MelPatch MelExtractor::patch(const Waveform& wave, std::size_t frame, double fps) const {
  require(fps > 0, "mel_patch: fps must be positive");
  require(wave.sample_rate == sample_rate_, "mel_patch: waveform sample rate differs from extractor");
  const auto center = static_cast<long long>(std::llround(static_cast<double>(frame) * sample_rate_ / fps));
  const auto hop = static_cast<long long>(cfg_.hop);
  const auto half_span = static_cast<long long>(cfg_.frames / 2) * hop;
  const auto half_fft = static_cast<long long>(cfg_.n_fft / 2);

  MelPatch out{Matrix(cfg_.n_mels, cfg_.frames), frame};
  for (std::size_t j = 0; j < cfg_.frames; ++j) {
    const long long col_center = center - half_span + static_cast<long long>(j) * hop;
    const auto power = power_column(wave.samples, col_center - half_fft);
    for (std::size_t m = 0; m < cfg_.n_mels; ++m) {
      const auto w = filterbank_.row(m);
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
      out.patch(m, j) = std::log10(std::max(e, kLogFloor));
    }
  }
  return out;
}

MelPatch mel_patch(const Waveform& wave, std::size_t frame, double fps, const MelConfig& cfg) {
  return MelExtractor(cfg, wave.sample_rate).patch(wave, frame, fps);
}

std::vector<MelPatch> mel_patches(const Waveform& wave, std::size_t count, double fps, const MelConfig& cfg) {
  const MelExtractor ex(cfg, wave.sample_rate);
  std::vector<MelPatch> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(ex.patch(wave, i, fps));
  return out;
}

SpeechFeatureWindow feature_window(const Matrix& sequence, std::size_t frame, std::size_t window) {
  require(window >= 1, "feature window size must be at least 1");
  require(sequence.rows() >= 1, "feature sequence is empty");
  const auto t = static_cast<long long>(sequence.rows());
  const auto first = static_cast<long long>(frame) - static_cast<long long>((window + 1) / 2) + 1;
  SpeechFeatureWindow out{Matrix(window, sequence.cols()), frame};
  for (std::size_t r = 0; r < window; ++r) {
    const auto src = static_cast<std::size_t>(std::clamp(first + static_cast<long long>(r), 0LL, t - 1));
    std::copy(sequence.row(src).begin(), sequence.row(src).end(), out.window.row(r).begin());
  }
  return out;
}

std::vector<SpeechFeatureWindow> slice_feature_windows(const Matrix& sequence, std::size_t window) {
  std::vector<SpeechFeatureWindow> out;
  out.reserve(sequence.rows());
  for (std::size_t i = 0; i < sequence.rows(); ++i) out.push_back(feature_window(sequence, i, window));
  return out;
}

Waveform add_gaussian_noise(const Waveform& wave, double snr_db, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) {
    require(snr_db > 0, "add_gaussian_noise: snr_db must be finite or +inf");
    return wave;
  }
  double power = 0.0;
  for (double s : wave.samples) power += s * s;
  if (!wave.samples.empty()) power /= static_cast<double>(wave.samples.size());
  if (power <= 0.0) throw std::invalid_argument("add_gaussian_noise: SNR is undefined for a silent signal");

  const double noise_std = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise_std);
  Waveform out = wave;
  for (double& s : out.samples) s = std::clamp(s + normal(rng), -1.0, 1.0);
  return out;
}

}  // namespace hava::audio
