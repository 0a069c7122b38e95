// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "hava/audio.hpp"
#include "hava/dataset.hpp"

namespace hava::augment {

/// Normalized samples of exp(-x^2 / 2 sigma^2) at integer offsets
/// -(window-1)/2 .. (window-1)/2.
std::vector<double> gaussian_kernel(double sigma, std::size_t window);

/// Componentwise smoothing with reflect padding, without re-anchoring.
data::PoseTrack gaussian_filter(const data::PoseTrack& track, double sigma = 1.0, std::size_t window = 29);

/// gaussian_filter followed by subtracting the smoothed frame 0.
data::PoseTrack gaussian_smooth(const data::PoseTrack& track, double sigma = 1.0, std::size_t window = 29);

/// Copy of `ds` with per-frame poses taken from `track`; vertices untouched.
data::Dataset attach_poses(data::Dataset ds, const data::PoseTrack& track);

/// Mel patches of every frame after injecting Gaussian noise at `snr_db`.
std::vector<Matrix> noisy_mels(const audio::Waveform& wave, const audio::MelConfig& mel, std::size_t frames,
                               double fps, double snr_db, std::uint64_t seed);

/// Training sequences for the pose model: the clean patches of `ds`
/// alternating with `count` noise-injected copies (clean, noisy 1, clean,
/// noisy 2, ...). With count 0 only the clean sequence is returned.
std::vector<std::vector<Matrix>> noise_variants(const data::Dataset& ds, const audio::Waveform& wave,
                                                const audio::MelConfig& mel, std::size_t count, double snr_db,
                                                std::uint64_t seed);

}  // namespace hava::augment
