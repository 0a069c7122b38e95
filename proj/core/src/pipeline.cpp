// SPDX-License-Identifier: Apache-2.0
#include "hava/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "hava/container.hpp"

namespace hava::pipeline {

std::size_t threads_from_env() {
  if (const char* env = std::getenv("HAVA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

InferResult infer_sequence(const InferInputs& in) {
  require(in.template_mesh != nullptr && in.anim != nullptr, "infer_sequence: template and animation model required");
  const auto& mesh = *in.template_mesh;
  const auto& anim = *in.anim;
  const std::size_t t = in.features.rows();
  require(t >= 1, "infer_sequence: empty feature sequence");

  InferResult out;
  out.pivot = mesh::centroid(mesh.vertices);

  // Pose pass first (sequential); frame 0 is the zero pose by construction.
  switch (in.pose.kind) {
    case PoseSource::Kind::None:
      out.poses.assign(t, {0, 0, 0});
      break;
    case PoseSource::Kind::Constant:
      out.poses.assign(t, in.pose.constant);
      break;
    case PoseSource::Kind::Model: {
      require(in.pose.model != nullptr, "infer_sequence: pose model missing");
      const auto patches = audio::mel_patches(in.wave, t, in.fps, in.mel);
      if (patches.size() != t) {
        throw std::invalid_argument("infer_sequence: " + std::to_string(patches.size()) + " mel frames for " +
                                    std::to_string(t) + " feature frames");
      }
      std::vector<Matrix> mels;
      mels.reserve(t);
      for (const auto& p : patches) mels.push_back(p.patch);
      out.poses = in.pose.model->predict_pose_track(mels);
      break;
    }
  }

  const auto windows = audio::slice_feature_windows(in.features, anim.config().window);
  out.unposed.resize(t);
  out.frames.resize(t);
  const std::size_t workers = std::clamp<std::size_t>(in.threads == 0 ? threads_from_env() : in.threads, 1, t);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    try {
      for (std::size_t i = next++; i < t; i = next++) {
        out.unposed[i] = anim.predict_frame(mesh, windows[i].window);
        Matrix posed = mesh::apply_pose(out.unposed[i], out.poses[i], out.pivot);
        if (in.round_trip) {
          const auto& p = out.poses[i];
          posed = mesh::apply_pose(posed, {-p[0], -p[1], -p[2]}, out.pivot);
        }
        out.frames[i] = std::move(posed);
      }
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
      next = t;
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::string frame_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.obj", index);
  return buf;
}

void write_sequence(const InferResult& result, std::span<const mesh::Face> faces, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < result.frames.size(); ++i) mesh::write_obj(result.frames[i], faces, dir / frame_filename(i));
  data::write_pose_csv(result.poses, dir / "poses.csv");
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("frame_") && name.ends_with(".obj")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FeatureFile read_features(const std::filesystem::path& path) {
  const auto c = io::read_container(path);
  const auto* f = c.find("features");
  if (f == nullptr) throw std::runtime_error(path.string() + ": no 'features' entry");
  if (f->dims.size() != 2) throw std::runtime_error(path.string() + ": 'features' must be T x D");
  FeatureFile out;
  out.features = Matrix(f->dims[0], f->dims[1], f->values);
  if (const auto* meta = c.find("meta"); meta != nullptr && !meta->values.empty()) out.fps = meta->values[0];
  require(out.fps > 0, "read_features: fps must be positive");
  return out;
}

}  // namespace hava::pipeline
