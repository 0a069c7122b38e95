// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <random>

#include "hava/animation_model.hpp"
#include "hava/audio.hpp"
#include "hava/dataset.hpp"
#include "hava/layers.hpp"
#include "hava/pose_model.hpp"
#include "hava/training.hpp"

namespace {

using namespace hava;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

model::AnimationConfig desk_animation() {
  model::AnimationConfig c;
  c.gcn_width = 32;
  c.gcn_layers = 4;
  return c;
}

void BM_DenseForwardBackward(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto width = static_cast<std::size_t>(state.range(1));
  const auto x = ad::Value::parameter({rows, width}, noise(rows * width, 1));
  const auto w = ad::Value::parameter({width, width}, noise(width * width, 2));
  const auto b = ad::Value::parameter({width}, noise(width, 3));
  for (auto _ : state) {
    const auto y = ad::square_sum(ad::dense(x, w, b));
    ad::backward(y);
    benchmark::DoNotOptimize(y.item());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_DenseForwardBackward)->Args({162 * 32, 32})->Args({162 * 32, 128});

void BM_GraphConv(benchmark::State& state) {
  const auto mesh = mesh::build_adjacency(mesh::make_icosphere(162, 100.0));
  const std::size_t batch = 32, width = static_cast<std::size_t>(state.range(0));
  const std::size_t rows = batch * mesh.vertex_count();
  const auto h = ad::Value::parameter({rows, width}, noise(rows * width, 4));
  const auto w = ad::Value::parameter({width, width}, noise(width * width, 5));
  const auto b = ad::Value::parameter({width}, noise(width, 6));
  const auto eps = ad::Value::parameter({1}, {0.0});
  for (auto _ : state) {
    const auto y = ad::square_sum(ad::graph_conv(h, mesh.adjacency, w, b, eps));
    ad::backward(y);
    benchmark::DoNotOptimize(y.item());
  }
}
BENCHMARK(BM_GraphConv)->Arg(32)->Arg(128);

void BM_MelPatch(benchmark::State& state) {
  const data::SynthConfig cfg;
  const auto wave = data::synthetic_waveform(1, 256, cfg);
  const audio::MelExtractor mel(cfg.mel, wave.sample_rate);
  std::size_t frame = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mel.patch(wave, frame, cfg.fps));
    frame = (frame + 1) % 256;
  }
}
BENCHMARK(BM_MelPatch);

void BM_PredictFrame(benchmark::State& state) {
  const auto ds = data::generate_synthetic_dataset(1, 162, 8);
  const model::AnimationModel m(state.range(0) ? desk_animation() : model::AnimationConfig{},
                                ds.template_mesh.vertex_count());
  for (auto _ : state) benchmark::DoNotOptimize(m.predict_frame(ds.template_mesh, ds.samples[3].speech_window.window));
}
BENCHMARK(BM_PredictFrame)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Stage1Step(benchmark::State& state) {
  const auto ds = data::generate_synthetic_dataset(7, 162, 64);
  model::AnimationModel m(desk_animation(), ds.template_mesh.vertex_count());
  ad::AdamState adam;
  adam.config.lr = 1e-4;
  const auto batch = model::epoch_batches(ds.frame_count(), static_cast<std::size_t>(state.range(0)), 0, 0).front();
  for (auto _ : state) {
    const auto loss = model::stage1_batch_loss(ds, m, batch, 10.0);
    ad::backward(loss);
    ad::adam_step(m.params(), adam);
  }
}
BENCHMARK(BM_Stage1Step)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_PoseTrack(benchmark::State& state) {
  const auto ds = data::generate_synthetic_dataset(7, 12, 256);
  model::PoseConfig c;
  c.mel_bins = ds.samples[0].mel.patch.rows();
  c.mel_frames = ds.samples[0].mel.patch.cols();
  const model::PoseModel m(c);
  std::vector<Matrix> mels;
  for (const auto& s : ds.samples) mels.push_back(s.mel.patch);
  for (auto _ : state) benchmark::DoNotOptimize(m.predict_pose_track(mels));
}
BENCHMARK(BM_PoseTrack)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
