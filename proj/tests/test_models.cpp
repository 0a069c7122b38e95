// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <numeric>

#include "grad_cases.hpp"
#include "hava/animation_model.hpp"
#include "hava/optim.hpp"
#include "hava/pose_model.hpp"

using namespace hava;
using namespace hava::model;
using ad::Value;

namespace {

using test::random_mels;
using test::random_windows;
using test::small_animation;
using test::small_pose;

void zero_all(ad::ParameterSet& ps) {
  for (auto& [name, v] : ps.items()) std::fill(v.mutable_data().begin(), v.mutable_data().end(), 0.0);
}

}  // namespace

TEST(AnimationConfig, Validation) {
  AnimationConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.fused_width(), 64u + 64u + 16u);
  c.agm_strides = {2, 2, 1, 1};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AnimationConfig{};
  c.window = 12;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = AnimationConfig{};
  c.gcn_layers = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(AnimationModel, ParameterShapesFollowConfig) {
  const AnimationConfig c;
  const AnimationModel m(c, 42);
  const auto shapes = animation_parameter_shapes(c);
  ASSERT_EQ(m.params().size(), shapes.size());
  EXPECT_EQ(m.params().get("alm.conv0.weight").shape(), (ad::Shape{32, 29, 4}));
  EXPECT_EQ(m.params().get("fsm.in.weight").shape(), (ad::Shape{144, 128}));
  EXPECT_EQ(m.params().get("fsm.gc7.eps").item(), 0.0);
  EXPECT_EQ(m.params().get("agm.mlp0.weight").shape(), (ad::Shape{64, 64}));
  EXPECT_EQ(m.embedding().shape(), (ad::Shape{42, 16}));

  auto params = m.params().clone();
  EXPECT_NO_THROW(AnimationModel(c, 42, params.clone()));
  AnimationConfig wider = c;
  wider.gcn_width = 64;
  EXPECT_THROW(AnimationModel(wider, 42, std::move(params)), std::invalid_argument);
}

TEST(AnimationModel, InitIsDeterministic) {
  const AnimationModel a(small_animation(3), 12), b(small_animation(3), 12), c(small_animation(4), 12);
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& va = a.params().items()[i].second;
    const auto& vb = b.params().items()[i].second;
    EXPECT_TRUE(std::equal(va.data().begin(), va.data().end(), vb.data().begin()));
  }
  EXPECT_FALSE(std::equal(a.params().get("alm.conv0.weight").data().begin(),
                          a.params().get("alm.conv0.weight").data().end(),
                          c.params().get("alm.conv0.weight").data().begin()));
}

TEST(AnimationModel, ZeroParametersGiveZeroMaps) {
  AnimationModel m(small_animation(), 12);
  zero_all(m.params());
  std::mt19937_64 rng(1);
  const auto x = m.window_batch(random_windows(rng, 2, 16, 5));
  const auto local = m.alm_forward(x), global = m.agm_forward(x);
  for (double v : local.data()) EXPECT_EQ(v, 0.0);
  for (double v : global.data()) EXPECT_EQ(v, 0.0);
}

TEST(AnimationModel, LocalRowsDependOnlyOnEmbedding) {
  // Index 2 of 5 and index 4 of 9 both normalize to 0, so their embedding
  // rows coincide and so must their local features.
  const auto cfg = small_animation(5);
  const AnimationModel a(cfg, 5);
  const AnimationModel b(cfg, 9, a.params().clone());
  std::mt19937_64 rng(2);
  const auto x = a.window_batch(random_windows(rng, 1, 16, 5));
  const auto la = a.alm_forward(x), lb = b.alm_forward(x);
  for (std::size_t k = 0; k < cfg.local_dim; ++k) {
    EXPECT_NEAR(la.data()[2 * cfg.local_dim + k], lb.data()[4 * cfg.local_dim + k], 1e-12);
    EXPECT_NEAR(la.data()[k], lb.data()[k], 1e-12);
  }
  // The global path never sees N.
  const auto ga = a.agm_forward(x), gb = b.agm_forward(x);
  EXPECT_TRUE(std::equal(ga.data().begin(), ga.data().end(), gb.data().begin()));
}

TEST(AnimationModel, GlobalFeaturesSeparateWindows) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const AnimationModel m(small_animation(seed), 12);
    std::mt19937_64 rng(seed + 100);
    const auto g = m.agm_forward(m.window_batch(random_windows(rng, 2, 16, 5)));
    bool differs = false;
    for (std::size_t k = 0; k < 3; ++k) differs |= g.data()[k] != g.data()[3 + k];
    EXPECT_TRUE(differs) << "seed " << seed;
  }
}

TEST(AnimationModel, AssembleFeaturesConcatenates) {
  const auto cfg = small_animation();
  const AnimationModel m(cfg, 4);
  std::mt19937_64 rng(3);
  const auto local = test::random_constant(rng, {8, 3});
  const auto global = test::random_constant(rng, {2, 3});
  const auto fused = m.assemble_features(local, global);
  ASSERT_EQ(fused.shape(), (ad::Shape{8, 10}));
  for (std::size_t r = 0; r < 8; ++r) {
    const std::size_t b = r / 4, v = r % 4;
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(fused.data()[r * 10 + k], local.data()[r * 3 + k]);
      EXPECT_EQ(fused.data()[r * 10 + 3 + k], global.data()[b * 3 + k]);
    }
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(fused.data()[r * 10 + 6 + k], m.embedding().data()[v * 4 + k]);
  }
  EXPECT_THROW(m.assemble_features(test::random_constant(rng, {8, 2}), global), std::invalid_argument);
  EXPECT_THROW(m.assemble_features(local, test::random_constant(rng, {3, 3})), std::invalid_argument);
}

TEST(AnimationModel, ZeroHeadPassesTemplateThrough) {
  AnimationModel m(small_animation(), 12);
  auto& w = m.params().get("fsm.head.weight");
  std::fill(w.mutable_data().begin(), w.mutable_data().end(), 0.0);
  const auto mesh = mesh::build_adjacency(mesh::make_icosphere(12, 100.0));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 3; ++i) {
    const auto win = test::random_matrix(rng, 16, 5);
    EXPECT_EQ(m.predict_frame(mesh, win), mesh.vertices);
  }
}

TEST(AnimationModel, PredictFrameIsPureAndShaped) {
  const AnimationModel m(small_animation(), 12);
  const auto mesh = mesh::build_adjacency(mesh::make_icosphere(12, 100.0));
  std::mt19937_64 rng(5);
  const auto win = test::random_matrix(rng, 16, 5);
  const auto a = m.predict_frame(mesh, win);
  EXPECT_EQ(a, m.predict_frame(mesh, win));
  EXPECT_EQ(a.rows(), 12u);
  for (double v : a.data()) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(m.predict_frame(mesh, test::random_matrix(rng, 15, 5)), std::invalid_argument);
  EXPECT_THROW(m.predict_frame(mesh::build_adjacency(mesh::make_icosphere(42, 100.0)), win), std::invalid_argument);
}

TEST(AnimationModel, FsmIsPermutationEquivariant) {
  const auto cfg = small_animation(6);
  AnimationModel m(cfg, 12);
  for (auto& [name, v] : m.params().items())
    if (name.ends_with(".bias") || name.ends_with(".eps"))
      for (double& x : v.mutable_data()) x = 0.1;
  const auto mesh = mesh::build_adjacency(mesh::make_icosphere(12, 100.0));
  std::mt19937_64 rng(6);
  const auto fused = test::random_constant(rng, {12, cfg.fused_width()});
  std::vector<std::uint32_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);

  mesh::TemplateMesh pm = mesh;
  std::vector<double> pf(fused.size());
  const std::size_t w = cfg.fused_width();
  for (std::size_t v = 0; v < 12; ++v) {
    pm.adjacency[perm[v]].clear();
    for (std::size_t k = 0; k < 3; ++k) pm.vertices(perm[v], k) = mesh.vertices(v, k);
    for (std::size_t k = 0; k < w; ++k) pf[perm[v] * w + k] = fused.data()[v * w + k];
  }
  for (std::size_t v = 0; v < 12; ++v)
    for (auto u : mesh.adjacency[v]) pm.adjacency[perm[v]].push_back(perm[u]);

  const auto y = m.fsm_forward(fused, mesh);
  const auto py = m.fsm_forward(Value::constant({12, w}, pf), pm);
  for (std::size_t v = 0; v < 12; ++v)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(py.data()[perm[v] * 3 + k], y.data()[v * 3 + k]);
}

class AnimationGradients : public ::testing::TestWithParam<int> {};

TEST_P(AnimationGradients, FullModelMatchesFiniteDifferences) {
  const auto r = test::animation_gradient_case(static_cast<std::uint64_t>(GetParam()));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, AnimationGradients, ::testing::Range(0, 20));

TEST(PoseConfig, Validation) {
  PoseConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.encoding_width(), 64u * 4u);
  c.lstm_layers = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PoseConfig{};
  c.chunk_len = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(PoseModel, ZeroParametersGiveZeroEncodingAndTrack) {
  PoseModel m(small_pose());
  zero_all(m.params());
  std::mt19937_64 rng(1);
  const auto mels = random_mels(rng, 9, m.config());
  const auto enc = m.psm_encode(mels[0]);
  for (double v : enc.data()) EXPECT_EQ(v, 0.0);
  for (const auto& p : m.predict_pose_track(mels)) EXPECT_EQ(p, (mesh::RotationVector{0, 0, 0}));
}

TEST(PoseModel, FirstFrameIsExactlyZero) {
  const PoseModel m(small_pose(2));
  std::mt19937_64 rng(2);
  const auto one = random_mels(rng, 1, m.config());
  const auto t1 = m.predict_pose_track(one);
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_EQ(t1[0], (mesh::RotationVector{0, 0, 0}));
  const auto many = random_mels(rng, 13, m.config());
  const auto t = m.predict_pose_track(many);
  EXPECT_EQ(t[0], (mesh::RotationVector{0, 0, 0}));
  EXPECT_NE(t[5], (mesh::RotationVector{0, 0, 0}));
  EXPECT_EQ(t, m.predict_pose_track(many));
}

TEST(PoseModel, ChunkedEqualsSinglePass) {
  const PoseModel m(small_pose(3));
  std::mt19937_64 rng(3);
  for (std::size_t len : {3u, 4u, 11u, 17u}) {
    const auto mels = random_mels(rng, len, m.config());
    EXPECT_EQ(m.predict_pose_track(mels), m.predict_pose_track_single_pass(mels)) << "length " << len;
  }
}

TEST(PoseModel, FirstLayerRespondsLinearlyToConstantShift) {
  PoseModel m(small_pose(4));
  std::mt19937_64 rng(4);
  const auto mel = test::random_matrix(rng, 8, 8);
  const auto& k = m.params().get("psm.conv0.weight");
  const auto zero_bias = Value::zeros({3});
  auto pre = [&](double c) {
    Matrix shifted = mel;
    for (double& v : shifted.data()) v += c;
    return ad::conv1d(Value::constant({8, 8}, {shifted.data().begin(), shifted.data().end()}), k, zero_bias, 1,
                      PoseConfig::kPadding);
  };
  const auto p0 = pre(0.0), p1 = pre(0.7), p2 = pre(1.4);
  for (std::size_t i = 0; i < p0.size(); ++i)
    EXPECT_NEAR(p2.data()[i] - p0.data()[i], 2.0 * (p1.data()[i] - p0.data()[i]), 1e-12);
}

TEST(PoseModel, MagnitudeTrack) {
  const data::PoseTrack t{{0, 0, 0}, {0.3, 0.4, 0}, {0.1, -0.2, 0.05}};
  const auto mag = pose_magnitude_track(t);
  EXPECT_EQ(mag[0], 0.0);
  EXPECT_DOUBLE_EQ(mag[1], 0.5);
  data::PoseTrack swapped;
  for (const auto& p : t) swapped.push_back({p[2], p[0], p[1]});
  const auto mag2 = pose_magnitude_track(swapped);
  for (std::size_t i = 0; i < mag.size(); ++i) EXPECT_NEAR(mag[i], mag2[i], 1e-15);
}

class PoseGradients : public ::testing::TestWithParam<int> {};

TEST_P(PoseGradients, FullModelMatchesFiniteDifferences) {
  const auto r = test::pose_gradient_case(static_cast<std::uint64_t>(GetParam()));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, PoseGradients, ::testing::Range(0, 20));
