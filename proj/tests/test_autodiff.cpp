// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hava/layers.hpp"
#include "hava/optim.hpp"
#include "grad_cases.hpp"

using namespace hava;
using namespace hava::ad;

namespace {

// Direct triple loop; kernel [Co x Ci x K], x [Ci x T].
std::vector<double> naive_conv(const std::vector<double>& x, std::size_t ci, std::size_t t,
                               const std::vector<double>& k, std::size_t co, std::size_t kw,
                               const std::vector<double>& b, std::size_t stride, std::size_t pad) {
  const std::size_t out = (t + 2 * pad - kw) / stride + 1;
  std::vector<double> y(co * out, 0.0);
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t j = 0; j < out; ++j) {
      double acc = b[o];
      for (std::size_t c = 0; c < ci; ++c)
        for (std::size_t q = 0; q < kw; ++q) {
          const long long src = static_cast<long long>(j * stride + q) - static_cast<long long>(pad);
          if (src < 0 || src >= static_cast<long long>(t)) continue;
          acc += k[(o * ci + c) * kw + q] * x[c * t + static_cast<std::size_t>(src)];
        }
      y[o * out + j] = acc;
    }
  return y;
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Adjacency random_graph(std::mt19937_64& rng, std::size_t n) {
  Adjacency adj(n);
  std::bernoulli_distribution edge(0.35);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (edge(rng)) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
  return adj;
}

void expect_all_near(std::span<const double> a, std::span<const double> b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

}  // namespace

TEST(Value, ConstructionAndNonFiniteGuard) {
  const auto v = Value::constant({2, 3}, std::vector<double>(6, 1.5));
  EXPECT_EQ(v.size(), 6u);
  EXPECT_FALSE(v.requires_grad());
  EXPECT_THROW(Value::constant({2}, {1.0}), std::invalid_argument);
  const auto big = Value::constant({1}, {1e308});
  EXPECT_THROW(scale(big, 10.0), NonFiniteError);
}

TEST(Backward, LinearAndQuadratic) {
  std::mt19937_64 rng(1);
  auto x = test::random_parameter(rng, {4, 3});
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
  x.zero_grad();
  backward(square_sum(x));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(x.grad()[i], 2.0 * x.data()[i]);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Value::parameter({2}, {1.0, -2.0});
  const auto loss = square_sum(x);
  backward(loss);
  backward(loss);
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
  EXPECT_THROW(backward(x), std::invalid_argument);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Value::parameter({2}, {1.0, 2.0});
  Value y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = square_sum(x);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
}

TEST(Dense, HandExamples) {
  const auto x = Value::constant({1, 2}, {1, 2});
  const auto w = Value::constant({2, 1}, {1, 1});
  const auto b = Value::constant({1}, {3});
  EXPECT_EQ(dense(x, w, b).item(), 6.0);

  std::mt19937_64 rng(2);
  const auto xr = test::random_constant(rng, {5, 3});
  const auto eye = Value::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const auto y = dense(xr, eye, Value::zeros({3}));
  expect_all_near(y.data(), xr.data(), 0.0);
  EXPECT_THROW(dense(xr, Value::zeros({2, 3}), Value::zeros({3})), std::invalid_argument);
}

TEST(Dense, MatchesNaiveProduct) {
  std::mt19937_64 rng(3);
  const auto x = test::random_constant(rng, {4, 5});
  const auto w = test::random_constant(rng, {5, 3});
  const auto b = test::random_constant(rng, {3});
  const auto y = dense(x, w, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t o = 0; o < 3; ++o) {
      double acc = b.data()[o];
      for (std::size_t k = 0; k < 5; ++k) acc += x.data()[i * 5 + k] * w.data()[k * 3 + o];
      EXPECT_NEAR(y.data()[i * 3 + o], acc, 1e-12);
    }
}

TEST(Dense, RowPermutationCommutesExactly) {
  // 43 rows leaves a ragged tail for any SIMD blocking over rows.
  std::mt19937_64 rng(4);
  const std::size_t rows = 43, in = 37, out = 29;
  const auto x = test::random_vector(rng, rows * in);
  const auto w = test::random_constant(rng, {in, out});
  const auto b = test::random_constant(rng, {out});
  std::vector<std::size_t> perm(rows);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> px(x.size());
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.begin() + r * in, in, px.begin() + perm[r] * in);
  const auto y = dense(Value::constant({rows, in}, x), w, b);
  const auto py = dense(Value::constant({rows, in}, px), w, b);
  const auto my = matmul(Value::constant({rows, in}, x), w);
  const auto mpy = matmul(Value::constant({rows, in}, px), w);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      ASSERT_EQ(py.data()[perm[r] * out + o], y.data()[r * out + o]);
      ASSERT_EQ(mpy.data()[perm[r] * out + o], my.data()[r * out + o]);
    }
}

TEST(Conv1d, BoxSumAndFullWidth) {
  const auto x = Value::constant({1, 7}, std::vector<double>(7, 1.0));
  const auto k = Value::constant({1, 1, 4}, std::vector<double>(4, 1.0));
  const auto y = conv1d(x, k, Value::zeros({1}), 1);
  ASSERT_EQ(y.shape(), (Shape{1, 4}));
  for (double v : y.data()) EXPECT_EQ(v, 4.0);

  const auto full = conv1d(x, Value::constant({2, 1, 7}, std::vector<double>(14, 0.5)), Value::zeros({2}), 1);
  EXPECT_EQ(full.shape(), (Shape{2, 1}));
  EXPECT_THROW(conv1d(x, Value::zeros({1, 1, 8}), Value::zeros({1}), 1), std::invalid_argument);
}

TEST(Conv1d, MatchesNaiveLoopAcrossStridesAndPadding) {
  std::mt19937_64 rng(4);
  for (std::size_t stride : {1u, 2u, 3u}) {
    for (std::size_t pad : {0u, 1u}) {
      const std::size_t ci = 3, co = 4, t = 11, kw = 3;
      const auto x = test::random_vector(rng, ci * t);
      const auto k = test::random_vector(rng, co * ci * kw);
      const auto b = test::random_vector(rng, co);
      const auto y = conv1d(Value::constant({ci, t}, x), Value::constant({co, ci, kw}, k), Value::constant({co}, b),
                            stride, pad);
      EXPECT_EQ(y.dim(1), conv_output_length(t, kw, stride, pad));
      expect_all_near(y.data(), naive_conv(x, ci, t, k, co, kw, b, stride, pad), 1e-12);

      // Batched input gives the same per-item result.
      auto x2 = test::random_vector(rng, ci * t);
      std::vector<double> both = x;
      both.insert(both.end(), x2.begin(), x2.end());
      const auto yb = conv1d(Value::constant({2, ci, t}, both), Value::constant({co, ci, kw}, k),
                             Value::constant({co}, b), stride, pad);
      const auto y2 = naive_conv(x2, ci, t, k, co, kw, b, stride, pad);
      expect_all_near(std::span(yb.data()).subspan(y.size()), y2, 1e-12);
    }
  }
}

TEST(Conv1d, LinearInInputWithZeroBias) {
  std::mt19937_64 rng(5);
  const auto k = test::random_constant(rng, {2, 3, 4});
  const auto zero = Value::zeros({2});
  const auto x1 = test::random_constant(rng, {3, 9});
  const auto x2 = test::random_constant(rng, {3, 9});
  const auto lhs = conv1d(add(x1, x2), k, zero, 1);
  const auto rhs = add(conv1d(x1, k, zero, 1), conv1d(x2, k, zero, 1));
  expect_all_near(lhs.data(), rhs.data(), 1e-12);
}

TEST(LeakyRelu, Branches) {
  const auto x = Value::parameter({3}, {2.0, -1.0, 0.0});
  const auto y = leaky_relu(x, 0.2);
  EXPECT_EQ(y.data()[0], 2.0);
  EXPECT_DOUBLE_EQ(y.data()[1], -0.2);
  EXPECT_EQ(y.data()[2], 0.0);
  backward(sum(y));
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.2);
  EXPECT_EQ(x.grad()[2], 0.2);
}

TEST(Lstm, ZeroFixedPoint) {
  const LstmState zero{Value::zeros({1, 4}), Value::zeros({1, 4})};
  const auto out = lstm_cell(Value::zeros({1, 3}), zero, Value::zeros({3, 16}), Value::zeros({4, 16}),
                             Value::zeros({16}));
  for (double v : out.h.data()) EXPECT_EQ(v, 0.0);
  for (double v : out.c.data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, ScalarHandEvaluation) {
  const double x = 0.7, h = -0.3, c = 0.5;
  const std::array<double, 4> wi{0.2, -0.4, 0.9, 0.1}, wh{0.3, 0.6, -0.5, 0.8}, bb{0.05, 1.0, -0.2, 0.3};
  const LstmState st{Value::constant({1, 1}, {h}), Value::constant({1, 1}, {c})};
  const auto out = lstm_cell(Value::constant({1, 1}, {x}), st, Value::constant({1, 4}, {wi.begin(), wi.end()}),
                             Value::constant({1, 4}, {wh.begin(), wh.end()}),
                             Value::constant({4}, {bb.begin(), bb.end()}));
  const double gi = sigmoid(wi[0] * x + wh[0] * h + bb[0]);
  const double gf = sigmoid(wi[1] * x + wh[1] * h + bb[1]);
  const double gg = std::tanh(wi[2] * x + wh[2] * h + bb[2]);
  const double go = sigmoid(wi[3] * x + wh[3] * h + bb[3]);
  const double c2 = gf * c + gi * gg;
  EXPECT_NEAR(out.c.item(), c2, 1e-12);
  EXPECT_NEAR(out.h.item(), go * std::tanh(c2), 1e-12);
}

TEST(GraphConv, HandExamples) {
  const Adjacency isolated{{}};
  const auto h = Value::constant({1, 2}, {3.0, -4.0});
  const auto eye = Value::constant({2, 2}, {1, 0, 0, 1});
  const auto eps = Value::constant({1}, {0.0});
  const auto y = graph_conv(h, isolated, eye, Value::zeros({2}), eps);
  expect_all_near(y.data(), h.data(), 0.0);

  const Adjacency tri{{1, 2}, {0, 2}, {0, 1}};
  const auto ones = Value::constant({3, 2}, std::vector<double>(6, 1.0));
  const auto summed = graph_conv(ones, tri, eye, Value::zeros({2}), eps);
  for (double v : summed.data()) EXPECT_EQ(v, 3.0);

  const Adjacency bad{{5}};
  EXPECT_THROW(graph_conv(h, bad, eye, Value::zeros({2}), eps), std::invalid_argument);
}

TEST(GraphConv, MatchesDenseAdjacencyForm) {
  std::mt19937_64 rng(6);
  const std::size_t n = 9, hw = 4;
  const auto adj = random_graph(rng, n);
  const auto h = test::random_constant(rng, {n, hw});
  const auto w = test::random_constant(rng, {hw, hw});
  const auto b = Value::zeros({hw});
  const double e = 0.37;
  const auto y = graph_conv(h, adj, w, b, Value::constant({1}, {e}));

  // ((1 + eps) I + A) h W
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    m[i * n + i] = 1.0 + e;
    for (auto j : adj[i]) m[i * n + j] += 1.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t o = 0; o < hw; ++o) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < hw; ++k) acc += m[i * n + j] * h.data()[j * hw + k] * w.data()[k * hw + o];
      EXPECT_NEAR(y.data()[i * hw + o], acc, 1e-12);
    }
}

TEST(GraphConv, PermutationEquivariantExactly) {
  std::mt19937_64 rng(7);
  const std::size_t n = 10, hw = 3;
  const auto adj = random_graph(rng, n);
  const auto h = test::random_constant(rng, {n, hw});
  const auto w = test::random_constant(rng, {hw, hw});
  const auto b = test::random_constant(rng, {hw});
  const auto eps = Value::constant({1}, {0.2});
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);

  // Vertex v moves to position perm[v]. Neighbor order is kept so the
  // summation order matches the original graph.
  Adjacency padj(n);
  std::vector<double> ph(n * hw);
  for (std::size_t v = 0; v < n; ++v) {
    for (auto u : adj[v]) padj[perm[v]].push_back(perm[u]);
    for (std::size_t k = 0; k < hw; ++k) ph[perm[v] * hw + k] = h.data()[v * hw + k];
  }
  const auto y = graph_conv(h, adj, w, b, eps);
  const auto py = graph_conv(Value::constant({n, hw}, ph), padj, w, b, eps);
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t k = 0; k < hw; ++k) EXPECT_EQ(py.data()[perm[v] * hw + k], y.data()[v * hw + k]);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  ParameterSet ps;
  auto& x = ps.add("x", Value::parameter({3}, {1.0, 2.0, 3.0}));
  x.mutable_grad()[0] = 4.0;
  x.mutable_grad()[1] = -0.5;
  x.mutable_grad()[2] = 0.1;
  AdamState st;
  st.config.lr = 0.01;
  adam_step(ps, st);
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(x.data()[0], 1.0 - 0.01, 1e-6 * 0.01);
  EXPECT_NEAR(x.data()[1], 2.0 + 0.01, 1e-6 * 0.01);
  EXPECT_NEAR(x.data()[2], 3.0 - 0.01, 1e-6 * 0.01);
  for (double g : x.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Adam, ZeroGradientLeavesParameterAndCountsStep) {
  ParameterSet ps;
  auto& x = ps.add("x", Value::parameter({2}, {1.0, -1.0}));
  AdamState st;
  adam_step(ps, st);
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(x.data()[0], 1.0);
  EXPECT_EQ(x.data()[1], -1.0);
}

TEST(Adam, MatchesScalarTrace) {
  ParameterSet ps;
  auto& x = ps.add("x", Value::parameter({1}, {0.5}));
  AdamState st;
  st.config = {0.1, 0.9, 0.999, 1e-8};
  const double g = 0.3;
  double theta = 0.5, m = 0.0, v = 0.0;
  for (int t = 1; t <= 2; ++t) {
    x.mutable_grad()[0] = g;
    adam_step(ps, st);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    theta -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(x.data()[0], theta, 1e-12);
  }
}

TEST(GradCheck, LinearIsExact) {
  std::mt19937_64 rng(8);
  ParameterSet ps;
  ps.add("w", test::random_parameter(rng, {6}));
  const auto weights = test::random_vector(rng, 6);
  const LossFn f = [&] { return weighted_sum(ps.get("w"), weights); };
  EXPECT_LT(finite_diff_check(f, ps), 1e-9);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  std::mt19937_64 rng(9);
  ParameterSet ps;
  ps.add("w", test::random_parameter(rng, {3, 2}));
  const auto x = test::random_constant(rng, {4, 3});
  const LossFn f = [&] { return square_sum(tanh(matmul(x, ps.get("w")))); };
  auto grads = analytic_gradients(f, ps);
  EXPECT_LT(compare_gradients(f, ps, grads).max_rel_error, 1e-4);
  for (auto& g : grads)
    for (auto& v : g) v *= 1.01;
  EXPECT_GT(compare_gradients(f, ps, grads).max_rel_error, 1e-3);
}

TEST(GradCheck, KinkInsideStencilIsJudgedOneSided) {
  ParameterSet ps;
  ps.add("x", Value::parameter({2}, {3e-6, 0.5}));
  const LossFn f = [&] { return sum(leaky_relu(ps.get("x"), 0.2)); };
  const auto grads = analytic_gradients(f, ps);
  GradCheckOptions strict;
  strict.kink_aware = false;
  EXPECT_GT(compare_gradients(f, ps, grads, strict).max_rel_error, 1e-2);
  const auto r = compare_gradients(f, ps, grads);
  EXPECT_EQ(r.kinks, 1u);
  EXPECT_LT(r.max_rel_error, 1e-9);

  auto wrong = grads;
  wrong[0][0] = 0.6;  // matches neither side
  EXPECT_GT(compare_gradients(f, ps, wrong).max_rel_error, 1e-2);
}

class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  const auto r = test::primitive_gradient_case(static_cast<std::uint64_t>(GetParam()));
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, PrimitiveGradients, ::testing::Range(1, 21));

TEST(Determinism, InitAndUpdatesAreBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(42);
    ParameterSet ps;
    ps.add("w", glorot_uniform(rng, {4, 3}, 4, 3));
    ps.add("b", Value::parameter({3}, std::vector<double>(3, 0.0)));
    const auto x = test::random_constant(rng, {5, 4});
    AdamState st;
    for (int i = 0; i < 3; ++i) {
      backward(square_sum(tanh(dense(x, ps.get("w"), ps.get("b")))));
      adam_step(ps, st);
    }
    return std::vector<double>(ps.get("w").data().begin(), ps.get("w").data().end());
  };
  EXPECT_EQ(run(), run());
}
