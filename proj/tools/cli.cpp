// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <iostream>

#include "hava/augmentation.hpp"
#include "hava/config.hpp"
#include "hava/container.hpp"
#include "hava/evaluation.hpp"
#include "hava/pipeline.hpp"
#include "hava/training.hpp"

namespace hava::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SynthArgs {
  fs::path out;
  std::size_t vertices = 162;
  std::size_t frames = 256;
  std::uint64_t seed = 0;
  bool no_poses = false;
};

struct TrainArgs {
  int stage = 1;
  fs::path data, ckpt, config, history, wav;
  std::size_t epochs = 0, batch = 0, max_steps = 0, noise_variants = 0;
  double noise_snr_db = 20.0;
  double lr = 1e-4, lr_decay_to = 1.0, lambda = 10.0;
  std::uint64_t seed = 0;
};

struct InferArgs {
  fs::path template_obj, anim_ckpt, pose_ckpt, features, wav, out;
  bool no_pose = false;
  std::optional<double> snr_db;
  std::uint64_t noise_seed = 0;
  std::vector<double> debug_pose;
  bool debug_round_trip = false;
};

struct EvalArgs {
  fs::path pred, gt, report, colormap;
  std::vector<fs::path> masks;
  bool squared = false;
  std::string method = "hava", dataset = "synth";
};

struct AugmentArgs {
  fs::path poses, out, attach;
  double sigma = 1.0;
  std::size_t window = 29;
};

void echo(const CLI::App& sub) {
  std::cerr << "hava " << sub.get_name() << " settings:\n";
  for (const auto* opt : sub.get_options()) {
    if (opt->get_name() == "--help" || opt->get_name().empty()) continue;
    std::string value;
    const auto results = opt->results();
    if (!results.empty()) {
      for (std::size_t i = 0; i < results.size(); ++i) value += (i ? "," : "") + results[i];
    } else {
      value = opt->get_default_str().empty() ? "(unset)" : opt->get_default_str();
    }
    std::cerr << "  " << opt->get_name() << " = " << value << '\n';
  }
}

// synth ---------------------------------------------------------------------

void run_synth(const SynthArgs& a) {
  const data::SynthConfig cfg;
  data::Dataset ds = data::generate_synthetic_dataset(a.seed, a.vertices, a.frames, cfg);
  const data::PoseTrack poses = ds.poses();
  fs::create_directories(a.out);
  if (a.no_poses) {
    ds.poses_present = false;
    for (auto& s : ds.samples) s.gt_pose = {0, 0, 0};
  }
  data::save_dataset(ds, a.out);
  audio::write_wav(data::synthetic_waveform(a.seed, a.frames, cfg), a.out / "audio.wav");
  data::write_pose_csv(poses, a.out / "poses.csv");
  mesh::write_region_mask(data::synthetic_lip_mask(ds.template_mesh), a.out / "lips.txt");
  mesh::write_region_mask(data::synthetic_eye_mask(ds.template_mesh), a.out / "eyes.txt");
  const auto pivot = mesh::centroid(ds.template_mesh.vertices);
  fs::create_directories(a.out / "posed");
  for (std::size_t i = 0; i < ds.frame_count(); ++i) {
    mesh::write_obj(mesh::apply_pose(ds.samples[i].gt_vertices, poses[i], pivot), ds.template_mesh.faces,
                    a.out / "posed" / pipeline::frame_filename(i));
  }
  std::cerr << "synth: " << ds.template_mesh.vertex_count() << " vertices, " << ds.frame_count() << " frames -> "
            << a.out.string() << '\n';
}

// train ---------------------------------------------------------------------

config::Entries prefixed(const config::Entries& e, const std::string& prefix) {
  config::Entries out;
  for (const auto& [k, v] : e) out[prefix + k] = v;
  return out;
}

config::Entries unprefixed(const config::Entries& e, const std::string& prefix) {
  config::Entries out;
  for (const auto& [k, v] : e)
    if (k.starts_with(prefix)) out[k.substr(prefix.size())] = v;
  return out;
}

void run_train(TrainArgs a, const CLI::App& sub) {
  model::TrainConfig cfg = model::TrainConfig::defaults(a.stage);
  if (sub.count("--epochs") != 0) cfg.epochs = a.epochs;
  if (sub.count("--batch") != 0) cfg.batch = a.batch;
  cfg.lr = a.lr;
  cfg.lr_decay_to = a.lr_decay_to;
  cfg.lambda = a.lambda;
  cfg.seed = a.seed;
  cfg.max_steps = a.max_steps;
  cfg.checkpoint = a.ckpt;
  std::cerr << "train: stage " << cfg.stage << ", " << cfg.epochs << " epochs, batch " << cfg.batch << '\n';

  model::AnimationConfig anim;
  model::PoseConfig pose;
  audio::MelConfig mel;
  if (!a.config.empty()) {
    const auto unknown = config::apply(config::read_key_values(a.config), anim, pose, mel);
    if (!unknown.empty()) throw UsageError("unknown config key '" + unknown.front() + "' in " + a.config.string());
  }
  anim.seed = a.seed;
  pose.seed = a.seed;

  auto progress = [](const model::LossRecord& r) {
    if (r.step % 50 == 0) std::cerr << "  step " << r.step << " epoch " << r.epoch << " loss " << r.loss << '\n';
  };
  model::TrainHistory history;
  ad::AdamState adam;
  if (cfg.stage == 1) {
    const data::Dataset ds = data::load_dataset(a.data, anim.window);
    model::AnimationModel m(anim, ds.template_mesh.vertex_count());
    history = model::train_stage1(ds, m, adam, cfg, progress);
  } else {
    const data::Dataset ds = data::load_dataset(a.data, anim.window);
    if (!ds.poses_present) throw model::MissingPosesError();
    const auto& patch = ds.samples.front().mel.patch;
    pose.mel_bins = mel.n_mels = patch.rows();
    pose.mel_frames = mel.frames = patch.cols();
    cfg.checkpoint_extra = prefixed(config::to_entries(mel), "mel_");
    model::PoseModel m(pose);
    audio::Waveform wave;
    if (a.noise_variants > 0) wave = audio::read_wav(a.wav.empty() ? a.data / "audio.wav" : a.wav);
    const auto variants = augment::noise_variants(ds, wave, mel, a.noise_variants, a.noise_snr_db, a.seed);
    history = model::train_stage2(ds, variants, m, adam, cfg, progress);
    std::cerr << "  pose MSE " << model::evaluate_pose_loss(ds, m) << '\n';
  }
  for (std::size_t e = 0; e < history.epoch_means.size(); ++e) {
    std::cerr << "  epoch " << e + 1 << " mean loss " << history.epoch_means[e] << '\n';
  }
  if (!a.history.empty()) model::write_history_csv(history, a.history);
  std::cerr << "train: checkpoint -> " << a.ckpt.string() << '\n';
}

// infer ---------------------------------------------------------------------

void run_infer(const InferArgs& a) {
  mesh::TemplateMesh tmpl = mesh::build_adjacency(mesh::load_obj(a.template_obj));
  auto anim_ck = model::load_checkpoint(a.anim_ckpt);
  const model::AnimationModel anim(config::animation_from(anim_ck.config), tmpl.vertex_count(),
                                   std::move(anim_ck.params));

  const auto feats = pipeline::read_features(a.features);
  pipeline::InferInputs in;
  in.template_mesh = &tmpl;
  in.anim = &anim;
  in.features = feats.features;
  in.fps = feats.fps;
  in.round_trip = a.debug_round_trip;

  std::optional<model::PoseModel> pose_model;
  if (a.no_pose) {
    in.pose.kind = pipeline::PoseSource::Kind::None;
  } else if (!a.debug_pose.empty()) {
    if (a.debug_pose.size() != 3) throw UsageError("--debug-pose expects three comma-separated values");
    in.pose.kind = pipeline::PoseSource::Kind::Constant;
    in.pose.constant = {a.debug_pose[0], a.debug_pose[1], a.debug_pose[2]};
  } else {
    if (a.pose_ckpt.empty()) throw UsageError("--pose-ckpt is required unless --no-pose or --debug-pose is given");
    if (a.wav.empty()) throw UsageError("--wav is required unless --no-pose or --debug-pose is given");
    auto pose_ck = model::load_checkpoint(a.pose_ckpt);
    pose_model.emplace(config::pose_from(pose_ck.config), std::move(pose_ck.params));
    in.mel = config::mel_from(unprefixed(pose_ck.config, "mel_"));
    in.wave = audio::read_wav(a.wav);
    const double audio_frames = static_cast<double>(in.wave.samples.size()) * in.fps / in.wave.sample_rate;
    const double t = static_cast<double>(in.features.rows());
    if (std::abs(audio_frames - t) > 1.0) {
      throw std::runtime_error("audio covers " + std::to_string(audio_frames) + " frames at " +
                               std::to_string(in.fps) + " fps, features have " + std::to_string(in.features.rows()));
    }
    if (a.snr_db) in.wave = audio::add_gaussian_noise(in.wave, *a.snr_db, a.noise_seed);
    in.pose.model = &*pose_model;
  }
  const auto result = pipeline::infer_sequence(in);
  pipeline::write_sequence(result, tmpl.faces, a.out);
  std::cerr << "infer: " << result.frames.size() << " frames -> " << a.out.string() << '\n';
}

// eval ----------------------------------------------------------------------

struct FrameSet {
  std::vector<Matrix> frames;
  std::vector<mesh::Face> faces;
};

FrameSet load_frame_dir(const fs::path& dir) {
  FrameSet out;
  for (const auto& p : pipeline::list_frames(dir)) {
    auto m = mesh::load_obj(p);
    if (out.faces.empty()) out.faces = m.faces;
    out.frames.push_back(std::move(m.vertices));
  }
  if (out.frames.empty()) throw std::runtime_error(dir.string() + ": no frame_*.obj files");
  return out;
}

FrameSet load_ground_truth(const fs::path& dir) {
  if (!fs::exists(dir / "data.hava")) return load_frame_dir(dir);
  const auto ds = data::load_dataset(dir);
  FrameSet out;
  out.faces = ds.template_mesh.faces;
  for (const auto& s : ds.samples) out.frames.push_back(s.gt_vertices);
  return out;
}

void run_eval(const EvalArgs& a) {
  const FrameSet pred = load_frame_dir(a.pred);
  const FrameSet gt = load_ground_truth(a.gt);
  if (pred.frames.size() != gt.frames.size()) {
    throw std::runtime_error("prediction has " + std::to_string(pred.frames.size()) + " frames, ground truth " +
                             std::to_string(gt.frames.size()));
  }
  const std::size_t n = gt.frames.front().rows();
  eval::ReportRow row{a.method, a.dataset, 0.0, std::nan(""), {}, {}};
  const auto lips = mesh::load_region_mask(a.masks.at(0), n);
  const auto rl = eval::regional_metric(gt.frames, pred.frames, lips, a.squared);
  row.e_vl = rl.value;
  row.lip_series = rl.per_frame;
  if (a.masks.size() > 1) {
    const auto eyes = mesh::load_region_mask(a.masks[1], n);
    const auto re = eval::regional_metric(gt.frames, pred.frames, eyes, a.squared);
    row.e_ve = re.value;
    row.eye_series = re.per_frame;
  }
  eval::emit_report(std::span<const eval::ReportRow>(&row, 1), a.report);
  if (!a.colormap.empty()) {
    std::vector<double> mean(n, 0.0);
    for (std::size_t f = 0; f < gt.frames.size(); ++f) {
      const auto e = eval::per_vertex_error(gt.frames[f], pred.frames[f]);
      for (std::size_t i = 0; i < n; ++i) mean[i] += e[i] / static_cast<double>(gt.frames.size());
    }
    mesh::TemplateMesh m;
    m.vertices = gt.frames.front();
    m.faces = gt.faces;
    mesh::export_ply_colormap(m, mean, a.colormap);
  }
  std::cerr << "eval: E_vl " << eval::format3(row.e_vl) << " E_ve " << eval::format3(row.e_ve) << " -> "
            << a.report.string() << '\n';
}

// augment -------------------------------------------------------------------

void run_augment(const AugmentArgs& a) {
  const auto raw = data::read_pose_csv(a.poses);
  const auto smooth = augment::gaussian_smooth(raw, a.sigma, a.window);
  data::write_pose_csv(smooth, a.out);
  if (!a.attach.empty()) {
    auto ds = augment::attach_poses(data::load_dataset(a.attach), smooth);
    data::save_dataset(ds, a.attach);
  }
  std::cerr << "augment: " << smooth.size() << " frames -> " << a.out.string() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Audio-driven, pose-controllable 3D face animation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic dataset");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--vertices", synth.vertices, "Minimum vertex count")->capture_default_str();
  s->add_option("--frames", synth.frames, "Frame count")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_flag("--no-poses", synth.no_poses, "Leave the pose track out of data.hava");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train stage 1 (animation) or stage 2 (pose)");
  t->add_option("--stage", train.stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--ckpt", train.ckpt, "Checkpoint to write")->required();
  t->add_option("--epochs", train.epochs, "Epochs (stage 1: 50, stage 2: 1)");
  t->add_option("--batch", train.batch, "Batch size (stage 1: 64 frames, stage 2: 8 chunks)");
  t->add_option("--lr", train.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--lr-decay-to", train.lr_decay_to, "Cosine-anneal lr to this fraction (1 = constant)")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  t->add_option("--lambda", train.lambda, "Velocity loss weight")->capture_default_str();
  t->add_option("--seed", train.seed, "Seed for initialization and shuffling")->capture_default_str();
  t->add_option("--max-steps", train.max_steps, "Stop after this many steps (0 = no cap)")->capture_default_str();
  t->add_option("--config", train.config, "key = value model settings (anim.*, pose.*, mel.*)");
  t->add_option("--history", train.history, "Write the step,epoch,loss history CSV");
  t->add_option("--noise-variants", train.noise_variants, "Stage 2: noise-injected mel copies to alternate with")
      ->capture_default_str();
  t->add_option("--noise-snr-db", train.noise_snr_db, "Stage 2: SNR of those copies")->capture_default_str();
  t->add_option("--wav", train.wav, "Stage 2: clip audio for the noisy copies (default DATA/audio.wav)");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Animate a template from speech features and audio");
  i->add_option("--template", infer.template_obj, "Template OBJ")->required();
  i->add_option("--anim-ckpt", infer.anim_ckpt, "Stage-1 checkpoint")->required();
  i->add_option("--pose-ckpt", infer.pose_ckpt, "Stage-2 checkpoint");
  i->add_option("--features", infer.features, "Feature container (entry 'features')")->required();
  i->add_option("--wav", infer.wav, "16-bit PCM WAV");
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_flag("--no-pose", infer.no_pose, "Skip the pose model");
  i->add_option("--snr-db", infer.snr_db, "Inject white noise at this SNR");
  i->add_option("--noise-seed", infer.noise_seed, "Noise seed")->capture_default_str();
  i->add_option("--debug-pose", infer.debug_pose, "Constant pose rx,ry,rz instead of the pose model")
      ->delimiter(',')
      ->expected(3);
  i->add_flag("--debug-roundtrip", infer.debug_round_trip, "Apply the pose and then its inverse");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Regional error report");
  e->add_option("--pred", ev.pred, "Predicted frame directory")->required();
  e->add_option("--gt", ev.gt, "Ground-truth frame directory or dataset directory")->required();
  e->add_option("--mask", ev.masks, "Lip mask, then optionally eye mask")->required()->expected(1, 2)->take_all();
  e->add_option("--report", ev.report, "Report CSV")->required();
  e->add_option("--colormap", ev.colormap, "PLY of the mean per-vertex error");
  e->add_flag("--squared", ev.squared, "Use squared distances");
  e->add_option("--method", ev.method, "Method name in the report")->capture_default_str();
  e->add_option("--dataset", ev.dataset, "Dataset name in the report")->capture_default_str();

  AugmentArgs aug;
  auto* a = app.add_subcommand("augment", "Smooth an estimated pose track and optionally attach it");
  a->add_option("--poses", aug.poses, "Input pose CSV")->required();
  a->add_option("--out", aug.out, "Smoothed pose CSV")->required();
  a->add_option("--sigma", aug.sigma, "Gaussian standard deviation")->capture_default_str();
  a->add_option("--window", aug.window, "Odd window size")->capture_default_str();
  a->add_option("--attach", aug.attach, "Dataset directory that receives the smoothed track");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return 2;
  }

  try {
    for (const auto* sub : app.get_subcommands()) echo(*sub);
    if (s->parsed()) run_synth(synth);
    if (t->parsed()) run_train(train, *t);
    if (i->parsed()) run_infer(infer);
    if (e->parsed()) run_eval(ev);
    if (a->parsed()) run_augment(aug);
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("hava");
  for (const auto& s : args) argv.push_back(s.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hava::cli
