// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "hava/audio.hpp"
#include "hava/mesh.hpp"

namespace hava::data {

/// Per-frame head rotation relative to frame 0.
using PoseTrack = std::vector<mesh::RotationVector>;

struct FrameSample {
  std::size_t frame = 0;
  Matrix gt_vertices;  // N x 3, millimeters
  mesh::RotationVector gt_pose{0, 0, 0};
  audio::SpeechFeatureWindow speech_window;
  audio::MelPatch mel;
};

/// One clip: a template, its per-frame samples and the raw feature sequence
/// the speech windows were cut from.
struct Dataset {
  mesh::TemplateMesh template_mesh;
  std::vector<FrameSample> samples;
  Matrix features;  // T x D
  double fps = 60.0;
  bool poses_present = false;

  std::size_t frame_count() const noexcept { return samples.size(); }
  PoseTrack poses() const;
};

PoseTrack parse_pose_csv(std::istream& in, const std::string& source = "<stream>");
PoseTrack read_pose_csv(const std::filesystem::path& path);
void write_pose_csv(const PoseTrack& track, const std::filesystem::path& path);

struct SynthConfig {
  std::size_t feature_dim = 29;  // D
  std::size_t window = 16;       // W
  double fps = 60.0;
  double sample_rate = 16000.0;
  audio::MelConfig mel;
  double radius_mm = 100.0;
  double max_displacement_mm = 2.0;
  double pose_amplitude_x = 0.1;
  double pose_amplitude_y = 0.05;
};

// Oracle pieces of the synthetic generator. Each is a pure function of its
// arguments and can be recomputed independently of any model.

/// T x D smoothed Gaussian feature sequence.
Matrix synthetic_features(std::uint64_t seed, std::size_t frames, std::size_t dim);
/// N x 3 smooth displacement basis with max row norm equal to `max_norm`.
Matrix synthetic_displacement_basis(std::uint64_t seed, const Matrix& template_vertices, double max_norm);
/// (a sin(2 pi i / T), b sin(4 pi i / T), 0).
mesh::RotationVector synthetic_pose(std::size_t frame, std::size_t frames, const SynthConfig& cfg);
/// template + basis * tanh(mean of the speech window).
Matrix synthetic_vertices(const Matrix& template_vertices, const Matrix& basis, const Matrix& speech_window);
/// Tone mixture whose band energies follow the pose phase, quantized to
/// 16-bit PCM levels so it survives a WAV round trip unchanged.
audio::Waveform synthetic_waveform(std::uint64_t seed, std::size_t frames, const SynthConfig& cfg);

/// Lip and eye bands on a synthetic sphere, chosen by angular distance from
/// fixed anchor directions on the +x side.
mesh::RegionMask synthetic_lip_mask(const mesh::TemplateMesh& mesh);
mesh::RegionMask synthetic_eye_mask(const mesh::TemplateMesh& mesh);

/// Deterministic dataset of a sphere template (>= n_vertices vertices) with
/// oracle displacements, poses and mel patches. All stored values are
/// representable in single precision so a save/load round trip is exact.
Dataset generate_synthetic_dataset(std::uint64_t seed, std::size_t n_vertices, std::size_t n_frames,
                                   const SynthConfig& cfg = {});

/// Writes `template.obj` and `data.hava` into `dir`.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir, std::size_t window = 16);

}  // namespace hava::data
