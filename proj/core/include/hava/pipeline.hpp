// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "hava/animation_model.hpp"
#include "hava/audio.hpp"
#include "hava/dataset.hpp"
#include "hava/pose_model.hpp"

namespace hava::pipeline {

/// How the per-frame pose is obtained.
struct PoseSource {
  enum class Kind { Model, None, Constant };
  Kind kind = Kind::Model;
  const model::PoseModel* model = nullptr;  // Kind::Model
  mesh::RotationVector constant{0, 0, 0};   // Kind::Constant
};

struct InferInputs {
  const mesh::TemplateMesh* template_mesh = nullptr;
  const model::AnimationModel* anim = nullptr;
  PoseSource pose;
  Matrix features;  // T x D
  audio::Waveform wave;
  double fps = 60.0;
  audio::MelConfig mel;
  /// Re-applies the inverse rotation after posing (debug round trip).
  bool round_trip = false;
  /// Worker threads for stage-1 inference; 0 picks threads_from_env().
  std::size_t threads = 0;
};

struct InferResult {
  std::vector<Matrix> unposed;  // template + displacement
  std::vector<Matrix> frames;   // posed output
  data::PoseTrack poses;
  mesh::Vec3 pivot{0, 0, 0};
};

/// HAVA_THREADS if set to a positive integer, otherwise the hardware count.
std::size_t threads_from_env();

InferResult infer_sequence(const InferInputs& in);

/// frame_00000.obj, frame_00001.obj, ... plus poses.csv.
void write_sequence(const InferResult& result, std::span<const mesh::Face> faces, const std::filesystem::path& dir);

std::string frame_filename(std::size_t index);
/// Sorted frame_*.obj files of a directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Feature sequence (entry "features", T x D) and fps (entry "meta", default
/// 60) from a container such as a dataset's data.hava.
struct FeatureFile {
  Matrix features;
  double fps = 60.0;
};
FeatureFile read_features(const std::filesystem::path& path);

}  // namespace hava::pipeline
