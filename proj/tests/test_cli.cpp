// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "hava/dataset.hpp"
#include "hava/mesh.hpp"
#include "hava/pipeline.hpp"
#include "support.hpp"

namespace hava {
namespace {

namespace fs = std::filesystem;
using cli::run_cli;

struct Captured {
  int code = 0;
  std::string err;
};

Captured run_capture(const std::vector<std::string>& args) {
  testing::internal::CaptureStderr();
  Captured c;
  c.code = run_cli(args);
  c.err = testing::internal::GetCapturedStderr();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small model widths so the whole pipeline runs in a couple of seconds.
void write_small_config(const fs::path& p) {
  std::ofstream out(p);
  out << "anim.bands = 2\n"
         "anim.alm_channels = 4,4,4,4,4\n"
         "anim.alm_mlp_hidden = 4,4,4\n"
         "anim.local_dim = 4\n"
         "anim.agm_channels = 4,4,4,4\n"
         "anim.agm_mlp_hidden = 4\n"
         "anim.global_dim = 4\n"
         "anim.gcn_width = 6\n"
         "anim.gcn_layers = 2\n"
         "pose.conv_channels = 4,4,4,4,4,4,4\n"
         "pose.lstm_hidden = 4\n"
         "pose.chunk_len = 8\n";
}

class CliPipeline : public testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli");
    write_small_config(dir_ / "small.cfg");
    ASSERT_EQ(run_capture({"synth", "--out", (dir_ / "data").string(), "--vertices", "12", "--frames", "24",
                           "--seed", "3"})
                  .code,
              0);
    ASSERT_EQ(run_capture({"train", "--stage", "1", "--data", (dir_ / "data").string(), "--ckpt",
                           (dir_ / "anim.ckpt").string(), "--config", (dir_ / "small.cfg").string(),
                           "--max-steps", "2", "--batch", "8"})
                  .code,
              0);
    ASSERT_EQ(run_capture({"train", "--stage", "2", "--data", (dir_ / "data").string(), "--ckpt",
                           (dir_ / "pose.ckpt").string(), "--config", (dir_ / "small.cfg").string(),
                           "--max-steps", "2"})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static std::vector<std::string> infer_args(const std::string& out) {
    return {"infer",
            "--template",
            (dir_ / "data" / "template.obj").string(),
            "--anim-ckpt",
            (dir_ / "anim.ckpt").string(),
            "--features",
            (dir_ / "data" / "data.hava").string(),
            "--out",
            (dir_ / out).string()};
  }

  static fs::path dir_;
};

fs::path CliPipeline::dir_;

TEST(Cli, UnknownFlagIsUsageError) {
  const auto r = run_capture({"synth", "--out", "x", "--bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--bogus"), std::string::npos);
}

TEST(Cli, MissingRequiredIsUsageError) {
  EXPECT_EQ(run_capture({"synth"}).code, 2);
  EXPECT_EQ(run_capture({}).code, 2);
  EXPECT_EQ(run_capture({"train", "--stage", "3", "--data", "d", "--ckpt", "c"}).code, 2);
}

TEST(Cli, RuntimeErrorExitsOne) {
  const auto dir = test::scratch_dir("cli_runtime");
  const auto r = run_capture({"augment", "--poses", (dir / "missing.csv").string(), "--out", (dir / "o.csv").string()});
  EXPECT_EQ(r.code, 1);
  fs::remove_all(dir);
}

TEST(Cli, EchoesSettings) {
  const auto dir = test::scratch_dir("cli_echo");
  data::write_pose_csv(data::PoseTrack(5, mesh::RotationVector{0.1, 0.2, 0.3}), dir / "p.csv");
  const auto r = run_capture({"augment", "--poses", (dir / "p.csv").string(), "--out", (dir / "s.csv").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("--sigma = 1"), std::string::npos);
  EXPECT_NE(r.err.find("--window = 29"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, AugmentConstantTrackAnchorsToZeroAndAttaches) {
  const auto dir = test::scratch_dir("cli_augment");
  ASSERT_EQ(run_capture({"synth", "--out", (dir / "d").string(), "--vertices", "12", "--frames", "10", "--no-poses"})
                .code,
            0);
  data::write_pose_csv(data::PoseTrack(10, mesh::RotationVector{0.2, -0.1, 0.05}), dir / "p.csv");
  ASSERT_EQ(run_capture({"augment", "--poses", (dir / "p.csv").string(), "--out", (dir / "s.csv").string(),
                         "--attach", (dir / "d").string()})
                .code,
            0);
  for (const auto& p : data::read_pose_csv(dir / "s.csv"))
    for (double v : p) EXPECT_EQ(v, 0.0);
  const auto ds = data::load_dataset(dir / "d");
  EXPECT_TRUE(ds.poses_present);
  fs::remove_all(dir);
}

TEST(Cli, StageTwoWithoutPosesAsksForAugmentation) {
  const auto dir = test::scratch_dir("cli_nopose");
  ASSERT_EQ(run_capture({"synth", "--out", (dir / "d").string(), "--vertices", "12", "--frames", "10", "--no-poses"})
                .code,
            0);
  const auto r =
      run_capture({"train", "--stage", "2", "--data", (dir / "d").string(), "--ckpt", (dir / "p.ckpt").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("augment first"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, UnknownConfigKeyIsUsageError) {
  const auto dir = test::scratch_dir("cli_cfg");
  {
    std::ofstream(dir / "bad.cfg") << "anim.no_such_key = 1\n";
  }
  const auto r = run_capture({"train", "--stage", "1", "--data", (dir / "d").string(), "--ckpt",
                              (dir / "c").string(), "--config", (dir / "bad.cfg").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("anim.no_such_key"), std::string::npos);
  fs::remove_all(dir);
}

TEST_F(CliPipeline, NoPoseEqualsZeroConstantPose) {
  auto a = infer_args("nopose");
  a.push_back("--no-pose");
  auto b = infer_args("zeropose");
  b.insert(b.end(), {"--debug-pose", "0,0,0"});
  ASSERT_EQ(run_capture(a).code, 0);
  ASSERT_EQ(run_capture(b).code, 0);
  const auto fa = pipeline::list_frames(dir_ / "nopose");
  const auto fb = pipeline::list_frames(dir_ / "zeropose");
  ASSERT_EQ(fa.size(), 24u);
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(slurp(fa[i]), slurp(fb[i])) << fa[i];
}

TEST_F(CliPipeline, PoseModelRunIsDeterministicAndAnchored) {
  auto a = infer_args("posed_a");
  a.insert(a.end(), {"--pose-ckpt", (dir_ / "pose.ckpt").string(), "--wav", (dir_ / "data" / "audio.wav").string()});
  auto b = infer_args("posed_b");
  b.insert(b.end(), {"--pose-ckpt", (dir_ / "pose.ckpt").string(), "--wav", (dir_ / "data" / "audio.wav").string()});
  ASSERT_EQ(run_capture(a).code, 0);
  ASSERT_EQ(run_capture(b).code, 0);
  const auto fa = pipeline::list_frames(dir_ / "posed_a");
  const auto fb = pipeline::list_frames(dir_ / "posed_b");
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(slurp(fa[i]), slurp(fb[i]));

  // Frame 0 carries no pose.
  auto c = infer_args("unposed");
  c.push_back("--no-pose");
  ASSERT_EQ(run_capture(c).code, 0);
  EXPECT_EQ(slurp(fa.front()), slurp(pipeline::list_frames(dir_ / "unposed").front()));
}

TEST_F(CliPipeline, PoseInferenceNeedsWav) {
  auto a = infer_args("nowav");
  a.insert(a.end(), {"--pose-ckpt", (dir_ / "pose.ckpt").string()});
  EXPECT_EQ(run_capture(a).code, 2);
}

TEST_F(CliPipeline, DebugPoseNeedsThreeValues) {
  auto a = infer_args("badpose");
  a.insert(a.end(), {"--debug-pose", "0,0"});
  EXPECT_EQ(run_capture(a).code, 2);
}

TEST_F(CliPipeline, RoundTripRecoversUnposedFrames) {
  auto a = infer_args("rt");
  a.insert(a.end(), {"--debug-pose", "0.3,-0.2,0.1", "--debug-roundtrip"});
  auto b = infer_args("rt_ref");
  b.push_back("--no-pose");
  ASSERT_EQ(run_capture(a).code, 0);
  ASSERT_EQ(run_capture(b).code, 0);
  const auto fa = pipeline::list_frames(dir_ / "rt");
  const auto fb = pipeline::list_frames(dir_ / "rt_ref");
  ASSERT_EQ(fa.size(), fb.size());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const auto ma = mesh::load_obj(fa[i]).vertices;
    const auto mb = mesh::load_obj(fb[i]).vertices;
    for (std::size_t k = 0; k < ma.size(); ++k) EXPECT_NEAR(ma.data()[k], mb.data()[k], 1e-6);
  }
}

TEST_F(CliPipeline, EvalWritesReportAndColormap) {
  auto a = infer_args("for_eval");
  a.push_back("--no-pose");
  ASSERT_EQ(run_capture(a).code, 0);
  const auto r = run_capture({"eval", "--pred", (dir_ / "for_eval").string(), "--gt", (dir_ / "data").string(),
                              "--mask", (dir_ / "data" / "lips.txt").string(), "--mask",
                              (dir_ / "data" / "eyes.txt").string(), "--report", (dir_ / "report.csv").string(),
                              "--colormap", (dir_ / "err.ply").string()});
  ASSERT_EQ(r.code, 0);
  const std::string report = slurp(dir_ / "report.csv");
  EXPECT_EQ(report.rfind("method,dataset,E_vl,E_ve\n", 0), 0u) << report;
  EXPECT_EQ(report.find("nan"), std::string::npos) << report;
  EXPECT_TRUE(fs::exists(dir_ / "err.ply"));

  // Evaluating ground truth against itself reads zero.
  const auto self = run_capture({"eval", "--pred", (dir_ / "data" / "posed").string(), "--gt",
                                 (dir_ / "data" / "posed").string(), "--mask",
                                 (dir_ / "data" / "lips.txt").string(), "--report", (dir_ / "self.csv").string()});
  ASSERT_EQ(self.code, 0);
  EXPECT_NE(slurp(dir_ / "self.csv").find("hava,synth,0.000,"), std::string::npos);
}

TEST_F(CliPipeline, StageTwoWithNoiseVariants) {
  const std::vector<std::string> base{"train",    "--stage",  "2", "--data", (dir_ / "data").string(),
                                      "--config", (dir_ / "small.cfg").string(), "--max-steps", "2"};
  auto a = base;
  a.insert(a.end(), {"--ckpt", (dir_ / "noisy.ckpt").string(), "--noise-variants", "2", "--noise-snr-db", "10"});
  EXPECT_EQ(run_capture(a).code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "noisy.ckpt"));
  auto b = base;
  b.insert(b.end(), {"--ckpt", (dir_ / "x.ckpt").string(), "--noise-variants", "1", "--wav",
                     (dir_ / "missing.wav").string()});
  EXPECT_EQ(run_capture(b).code, 1);
  auto c = base;
  c.insert(c.end(), {"--ckpt", (dir_ / "x.ckpt").string(), "--lr-decay-to", "2"});
  EXPECT_EQ(run_capture(c).code, 2);
}

TEST_F(CliPipeline, EvalFrameCountMismatchIsRuntimeError) {
  const auto dir = dir_ / "short";
  fs::create_directories(dir);
  fs::copy_file(pipeline::list_frames(dir_ / "data" / "posed").front(), dir / pipeline::frame_filename(0));
  const auto r = run_capture({"eval", "--pred", dir.string(), "--gt", (dir_ / "data").string(), "--mask",
                              (dir_ / "data" / "lips.txt").string(), "--report", (dir_ / "r.csv").string()});
  EXPECT_EQ(r.code, 1);
}

}  // namespace
}  // namespace hava
