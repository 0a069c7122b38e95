// SPDX-License-Identifier: Apache-2.0
#include "hava/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "hava/container.hpp"
#include "hava/losses.hpp"

namespace hava::model {

using ad::Value;

TrainConfig TrainConfig::defaults(int stage) {
  TrainConfig c;
  c.stage = stage;
  if (stage == 2) {
    c.epochs = 1;
    c.batch = 8;
  }
  return c;
}

void TrainConfig::validate() const {
  require(stage == 1 || stage == 2, "train config: stage must be 1 or 2");
  require(batch >= 1, "train config: batch must be >= 1");
  require(lr >= 0 && std::isfinite(lr), "train config: lr must be finite and >= 0");
  require(lambda >= 0 && std::isfinite(lambda), "train config: lambda must be finite and >= 0");
  require(lr_decay_to >= 0 && lr_decay_to <= 1, "train config: lr_decay_to must lie in [0, 1]");
}

MissingPosesError::MissingPosesError()
    : std::runtime_error("dataset has no pose track; augment first (hava augment --poses P.csv --attach DIR)") {}

TrainingDivergedError::TrainingDivergedError(std::size_t step, const std::string& what)
    : std::runtime_error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

namespace {

struct EpochMeans {
  std::size_t epoch = 0;
  double sum = 0.0;
  std::size_t count = 0;

  void add(TrainHistory& h, const LossRecord& r) {
    if (r.epoch != epoch) flush(h);
    epoch = r.epoch;
    sum += r.loss;
    ++count;
  }
  void flush(TrainHistory& h) {
    if (count != 0) h.epoch_means.push_back(sum / static_cast<double>(count));
    sum = 0.0;
    count = 0;
  }
};

std::size_t total_steps(const TrainConfig& cfg, std::size_t per_epoch) {
  std::size_t total = cfg.epochs * per_epoch;
  if (cfg.max_steps != 0) total = std::min(total, cfg.max_steps);
  return total;
}

}  // namespace

double scheduled_lr(const TrainConfig& cfg, std::size_t step, std::size_t total) {
  if (cfg.lr_decay_to == 1.0 || total <= 1) return cfg.lr;
  const double t = static_cast<double>(step) / static_cast<double>(total - 1);
  const double floor = cfg.lr * cfg.lr_decay_to;
  return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

Value displacement_targets(const data::Dataset& ds, std::span<const std::size_t> frames) {
  const Matrix& tmpl = ds.template_mesh.vertices;
  std::vector<double> out;
  out.reserve(frames.size() * tmpl.size());
  for (auto f : frames) {
    const Matrix& y = ds.samples[f].gt_vertices;
    for (std::size_t i = 0; i < tmpl.size(); ++i) out.push_back(y.data()[i] - tmpl.data()[i]);
  }
  return Value::constant({frames.size() * tmpl.rows(), 3}, std::move(out));
}

config::Entries merged(config::Entries base, const config::Entries& extra) {
  for (const auto& [k, v] : extra) base[k] = v;
  return base;
}

}  // namespace

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t frames, std::size_t batch, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < frames; i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(frames, i + batch)));
  }
  return out;
}

Value stage1_batch_loss(const data::Dataset& ds, const AnimationModel& model, std::span<const std::size_t> frames,
                        double lambda) {
  require(!frames.empty(), "stage1_batch_loss: empty batch");
  // Frame 0 is its own predecessor so its velocity term is exactly zero.
  std::vector<std::size_t> prev;
  prev.reserve(frames.size());
  for (auto f : frames) prev.push_back(f == 0 ? 0 : f - 1);

  std::vector<Matrix> windows;
  windows.reserve(2 * frames.size());
  for (auto f : frames) windows.push_back(ds.samples[f].speech_window.window);
  for (auto f : prev) windows.push_back(ds.samples[f].speech_window.window);

  const std::size_t rows = frames.size() * model.vertex_count();
  const Value d = model.displacements(windows, ds.template_mesh);
  const Value d_cur = ad::slice_rows(d, 0, rows);
  const Value d_prev = ad::slice_rows(d, rows, rows);
  const Value y_cur = displacement_targets(ds, frames);
  const Value y_prev = displacement_targets(ds, prev);

  Value loss = reconstruction_loss(y_cur, d_cur);
  if (lambda != 0.0) loss = ad::add(loss, ad::scale(velocity_loss(y_prev, y_cur, d_prev, d_cur), lambda));
  return ad::scale(loss, 1.0 / static_cast<double>(frames.size()));
}

TrainHistory train_stage1(const data::Dataset& ds, AnimationModel& model, ad::AdamState& adam,
                          const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  const std::size_t t = ds.frame_count();
  require(t >= 1, "train_stage1: dataset has no frames");
  if (ds.template_mesh.vertex_count() != model.vertex_count()) {
    throw std::invalid_argument("train_stage1: dataset has " + std::to_string(ds.template_mesh.vertex_count()) +
                                " vertices, model expects " + std::to_string(model.vertex_count()));
  }
  const auto& w0 = ds.samples.front().speech_window.window;
  if (w0.rows() != model.config().window || w0.cols() != model.config().feature_dim) {
    throw std::invalid_argument("train_stage1: dataset windows are " + std::to_string(w0.rows()) + "x" +
                                std::to_string(w0.cols()) + ", model expects " +
                                std::to_string(model.config().window) + "x" +
                                std::to_string(model.config().feature_dim));
  }

  adam.config.lr = cfg.lr;
  const std::size_t per_epoch = (t + cfg.batch - 1) / cfg.batch;
  const std::size_t total = total_steps(cfg, per_epoch);
  TrainHistory history;
  EpochMeans means;
  std::vector<std::vector<std::size_t>> batches;
  std::size_t batches_epoch = SIZE_MAX;
  for (std::size_t step = adam.step; step < total; ++step) {
    adam.config.lr = scheduled_lr(cfg, step, total);
    const std::size_t epoch = step / per_epoch;
    if (epoch != batches_epoch) {
      batches = epoch_batches(t, cfg.batch, cfg.seed, epoch);
      batches_epoch = epoch;
    }
    double value = 0.0;
    try {
      const Value loss = stage1_batch_loss(ds, model, batches[step % per_epoch], cfg.lambda);
      value = loss.item();
      ad::backward(loss);
      ad::adam_step(model.params(), adam);
      for (const auto& [_, p] : model.params().items())
        for (double x : p.data())
          if (!std::isfinite(x)) throw ad::NonFiniteError("parameter update produced a non-finite value");
    } catch (const ad::NonFiniteError& e) {
      throw TrainingDivergedError(step + 1, e.what());
    }
    const LossRecord rec{step + 1, epoch + 1, value};
    history.steps.push_back(rec);
    means.add(history, rec);
    if (on_step) on_step(rec);
  }
  means.flush(history);
  if (!cfg.checkpoint.empty()) {
    save_checkpoint(cfg.checkpoint, model.params(), adam, merged(config::to_entries(model.config()),
                                                                 cfg.checkpoint_extra));
  }
  return history;
}

TrainHistory train_stage1(const data::Dataset& ds, AnimationModel& model, const TrainConfig& cfg) {
  ad::AdamState adam;
  return train_stage1(ds, model, adam, cfg);
}

namespace {

std::vector<Matrix> clip_mels(const data::Dataset& ds) {
  std::vector<Matrix> mels;
  mels.reserve(ds.frame_count());
  for (const auto& s : ds.samples) mels.push_back(s.mel.patch);
  return mels;
}

Value pose_targets(const data::Dataset& ds, std::size_t start, std::size_t n) {
  std::vector<double> out;
  out.reserve(3 * n);
  for (std::size_t i = start; i < start + n; ++i) out.insert(out.end(), ds.samples[i].gt_pose.begin(), ds.samples[i].gt_pose.end());
  return Value::constant({n, 3}, std::move(out));
}

}  // namespace

TrainHistory train_stage2(const data::Dataset& ds, PoseModel& model, ad::AdamState& adam, const TrainConfig& cfg,
                          const StepCallback& on_step) {
  if (!ds.poses_present) throw MissingPosesError();
  const std::vector<std::vector<Matrix>> clean{clip_mels(ds)};
  return train_stage2(ds, clean, model, adam, cfg, on_step);
}

TrainHistory train_stage2(const data::Dataset& ds, std::span<const std::vector<Matrix>> mel_variants,
                          PoseModel& model, ad::AdamState& adam, const TrainConfig& cfg,
                          const StepCallback& on_step) {
  cfg.validate();
  if (!ds.poses_present) throw MissingPosesError();
  const std::size_t t = ds.frame_count();
  require(t >= 1, "train_stage2: dataset has no frames");
  require(!mel_variants.empty(), "train_stage2: no mel sequences");
  for (const auto& v : mel_variants) {
    if (v.size() != t) {
      throw std::invalid_argument("train_stage2: mel sequence has " + std::to_string(v.size()) +
                                  " frames, dataset has " + std::to_string(t));
    }
  }
  const std::size_t chunk = model.config().chunk_len;
  const std::size_t chunks = (t + chunk - 1) / chunk;
  const std::size_t per_epoch = (chunks + cfg.batch - 1) / cfg.batch;
  const std::size_t total = total_steps(cfg, per_epoch);

  adam.config.lr = cfg.lr;
  TrainHistory history;
  EpochMeans means;
  for (std::size_t step = adam.step; step < total; ++step) {
    adam.config.lr = scheduled_lr(cfg, step, total);
    const std::size_t epoch = step / per_epoch;
    const std::vector<Matrix>& mels = mel_variants[epoch % mel_variants.size()];
    const std::size_t first = (step % per_epoch) * cfg.batch;
    const std::size_t last = std::min(chunks, first + cfg.batch);
    const std::size_t start = first * chunk;
    const std::size_t end = std::min(t, last * chunk);
    double value = 0.0;
    try {
      // The state entering this group is recomputed from the current
      // parameters, so a resumed run sees exactly what an unbroken one does.
      PoseState state = model.zero_state();
      if (start > 0) {
        ad::NoGradGuard no_grad;
        model.recurrent(model.encode(std::span<const Matrix>(mels).first(start)), state);
      }
      Value r0;
      if (start > 0) {
        PoseState fresh = model.zero_state();
        r0 = model.recurrent(model.encode(std::span<const Matrix>(mels).first(1)), fresh);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      Value loss;
      for (std::size_t c = first; c < last; ++c) {
        const std::size_t s = c * chunk;
        const std::size_t n = std::min(chunk, t - s);
        state = state.detached();
        const Value r = model.recurrent(model.encode(std::span<const Matrix>(mels).subspan(s, n)), state);
        if (!r0.defined()) r0 = ad::slice_rows(r, 0, 1);
        const Value p_hat = ad::sub(r, ad::repeat_rows(r0, n));
        const Value term = ad::scale(ad::square_sum(ad::sub(p_hat, pose_targets(ds, s, n))), inv);
        loss = loss.defined() ? ad::add(loss, term) : term;
      }
      value = loss.item();
      ad::backward(loss);
      ad::adam_step(model.params(), adam);
    } catch (const ad::NonFiniteError& e) {
      throw TrainingDivergedError(step + 1, e.what());
    }
    const LossRecord rec{step + 1, epoch + 1, value};
    history.steps.push_back(rec);
    means.add(history, rec);
    if (on_step) on_step(rec);
  }
  means.flush(history);
  if (!cfg.checkpoint.empty()) {
    save_checkpoint(cfg.checkpoint, model.params(), adam, merged(config::to_entries(model.config()),
                                                                 cfg.checkpoint_extra));
  }
  return history;
}

TrainHistory train_stage2(const data::Dataset& ds, PoseModel& model, const TrainConfig& cfg) {
  ad::AdamState adam;
  return train_stage2(ds, model, adam, cfg);
}

double evaluate_pose_loss(const data::Dataset& ds, const PoseModel& model) {
  const std::vector<Matrix> mels = clip_mels(ds);
  return pose_loss(ds.poses(), model.predict_pose_track(mels));
}

// Checkpoint layout: parameters under their own names, Adam moments under
// "__adam_m/<name>" and "__adam_v/<name>", the step and hyper-parameters under
// "__meta_step" / "__adam", config fields under "__config/<key>". All f64.

namespace {

constexpr const char* kAdamM = "__adam_m/";
constexpr const char* kAdamV = "__adam_v/";
constexpr const char* kConfig = "__config/";

std::vector<std::uint32_t> dims_of(const ad::Shape& shape) {
  return std::vector<std::uint32_t>(shape.begin(), shape.end());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ad::ParameterSet& params, const ad::AdamState& adam,
                     const config::Entries& config) {
  io::TensorContainer c;
  for (const auto& [name, p] : params.items()) {
    c.add(name, dims_of(p.shape()), std::vector<double>(p.data().begin(), p.data().end()), io::DType::F64);
  }
  for (const auto& [name, p] : params.items()) {
    const auto m = adam.m.find(name);
    const auto v = adam.v.find(name);
    if (m == adam.m.end() || v == adam.v.end()) continue;
    c.add(kAdamM + name, dims_of(p.shape()), m->second, io::DType::F64);
    c.add(kAdamV + name, dims_of(p.shape()), v->second, io::DType::F64);
  }
  c.add("__meta_step", {1}, {static_cast<double>(adam.step)}, io::DType::F64);
  c.add("__adam", {4}, {adam.config.lr, adam.config.beta1, adam.config.beta2, adam.config.eps}, io::DType::F64);
  for (const auto& [key, values] : config) {
    c.add(kConfig + key, {static_cast<std::uint32_t>(values.size())}, values, io::DType::F64);
  }
  io::write_container(c, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const io::TensorContainer c = io::read_container(path);
  Checkpoint out;
  for (const auto& e : c.entries()) {
    if (e.name.starts_with(kAdamM)) {
      out.adam.m[e.name.substr(std::string_view(kAdamM).size())] = e.values;
    } else if (e.name.starts_with(kAdamV)) {
      out.adam.v[e.name.substr(std::string_view(kAdamV).size())] = e.values;
    } else if (e.name.starts_with(kConfig)) {
      out.config[e.name.substr(std::string_view(kConfig).size())] = e.values;
    } else if (e.name == "__meta_step") {
      require(e.values.size() == 1 && e.values[0] >= 0, "checkpoint: bad __meta_step");
      out.adam.step = static_cast<std::uint64_t>(e.values[0]);
    } else if (e.name == "__adam") {
      require(e.values.size() == 4, "checkpoint: bad __adam entry");
      out.adam.config = {e.values[0], e.values[1], e.values[2], e.values[3]};
    } else {
      out.params.add(e.name, Value::parameter(ad::Shape(e.dims.begin(), e.dims.end()), e.values));
    }
  }
  return out;
}

void restore_parameters(ad::ParameterSet& target, const ad::ParameterSet& source) {
  for (auto& [name, p] : target.items()) {
    if (!source.contains(name)) throw std::invalid_argument("checkpoint: missing parameter '" + name + "'");
    const auto& s = source.get(name);
    if (s.shape() != p.shape()) {
      throw std::invalid_argument("checkpoint: parameter '" + name + "' has shape " + ad::shape_string(s.shape()) +
                                  ", model expects " + ad::shape_string(p.shape()));
    }
  }
  for (const auto& [name, _] : source.items()) {
    if (!target.contains(name)) throw std::invalid_argument("checkpoint: unexpected parameter '" + name + "'");
  }
  for (auto& [name, p] : target.items()) {
    const auto src = source.get(name).data();
    std::copy(src.begin(), src.end(), p.mutable_data().begin());
  }
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,epoch,loss\n";
  char buf[64];
  for (const auto& r : history.steps) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.step << ',' << r.epoch << ',' << buf << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hava::model
