// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "hava/animation_model.hpp"
#include "hava/config.hpp"
#include "hava/dataset.hpp"
#include "hava/optim.hpp"
#include "hava/pose_model.hpp"

namespace hava::model {

struct TrainConfig {
  int stage = 1;
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double lr = 1e-4;
  /// Cosine-anneals the learning rate to lr * lr_decay_to at the final step;
  /// 1 keeps it constant.
  double lr_decay_to = 1.0;
  double lambda = 10.0;
  std::uint64_t seed = 0;
  /// Written after the last step when non-empty.
  std::filesystem::path checkpoint;
  /// Stop after this many optimizer steps in total (0 = no cap).
  std::size_t max_steps = 0;
  /// Additional numeric entries stored with the checkpoint config.
  config::Entries checkpoint_extra;

  /// Stage-1: 50 epochs of 64 frames; stage-2: 1 epoch of 8 chunks.
  static TrainConfig defaults(int stage);
  void validate() const;
};

struct LossRecord {
  std::size_t step = 0;  // 1-based optimizer step
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
};

struct TrainHistory {
  std::vector<LossRecord> steps;
  std::vector<double> epoch_means;
};

/// Pose track absent from the dataset; the message tells the user to run the
/// augmentation step first.
class MissingPosesError : public std::runtime_error {
 public:
  MissingPosesError();
};

/// Raised when a step produced a NaN or infinity.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Continues from `adam.step`: steps already taken are skipped, so a
/// checkpointed run resumes on the same batch sequence.
TrainHistory train_stage1(const data::Dataset& ds, AnimationModel& model, ad::AdamState& adam,
                          const TrainConfig& cfg, const StepCallback& on_step = {});
TrainHistory train_stage1(const data::Dataset& ds, AnimationModel& model, const TrainConfig& cfg);

TrainHistory train_stage2(const data::Dataset& ds, PoseModel& model, ad::AdamState& adam, const TrainConfig& cfg,
                          const StepCallback& on_step = {});
TrainHistory train_stage2(const data::Dataset& ds, PoseModel& model, const TrainConfig& cfg);

/// Stage 2 over alternative mel sequences of the same clip, such as
/// noise-injected copies: epoch e reads mel_variants[e % size]. Targets come
/// from `ds`.
TrainHistory train_stage2(const data::Dataset& ds, std::span<const std::vector<Matrix>> mel_variants,
                          PoseModel& model, ad::AdamState& adam, const TrainConfig& cfg,
                          const StepCallback& on_step = {});

/// Learning rate of 0-based `step` out of `total` under cfg's schedule.
double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total);

/// Batches of frame indices for one stage-1 epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t frames, std::size_t batch, std::uint64_t seed,
                                                    std::size_t epoch);

/// Differentiable stage-1 loss of one batch of frames.
ad::Value stage1_batch_loss(const data::Dataset& ds, const AnimationModel& model, std::span<const std::size_t> frames,
                            double lambda);

/// Mean pose loss of the whole clip, run in chunks.
double evaluate_pose_loss(const data::Dataset& ds, const PoseModel& model);

// Checkpoints: parameters, Adam moments and step, and the numeric config.

struct Checkpoint {
  ad::ParameterSet params;
  ad::AdamState adam;
  config::Entries config;
};

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterSet& params, const ad::AdamState& adam,
                     const config::Entries& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint parameters into `target`, which must hold exactly the
/// same names and shapes; throws naming the first offending entry.
void restore_parameters(ad::ParameterSet& target, const ad::ParameterSet& source);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

}  // namespace hava::model
