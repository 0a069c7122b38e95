// SPDX-License-Identifier: Apache-2.0
#include "hava/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hava::ad {

void adam_step(ParameterSet& params, AdamState& state) {
  const auto& c = state.config;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, p] : params.items()) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != p.size()) m.assign(p.size(), 0.0);
    if (v.size() != p.size()) v.assign(p.size(), 0.0);
    const auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      w[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
    }
  }
  params.zero_grad();
}

std::vector<std::vector<double>> analytic_gradients(const LossFn& loss, ParameterSet& params) {
  params.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (auto& [_, p] : params.items()) {
    const auto g = p.grad();
    out.emplace_back(g.empty() ? std::vector<double>(p.size(), 0.0) : std::vector<double>(g.begin(), g.end()));
  }
  params.zero_grad();
  return out;
}

GradCheckResult compare_gradients(const LossFn& loss, ParameterSet& params,
                                  const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opts) {
  if (analytic.size() != params.size()) throw std::invalid_argument("compare_gradients: gradient count mismatch");
  GradCheckResult res;
  std::mt19937_64 rng(opts.sample_seed);
  NoGradGuard no_grad;
  const double base = loss().item();
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max(1e-8, std::abs(a) + std::abs(n)); };
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, p] = params.items()[pi];
    auto data = p.mutable_data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords_per_param != 0 && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin() + 1, coords.end() - 1, rng);
      coords.resize(std::max<std::size_t>(opts.max_coords_per_param, 2) - 1);
      coords.push_back(data.size() - 1);
    }
    for (auto i : coords) {
      const double orig = data[i];
      data[i] = orig + opts.h;
      const double up = loss().item();
      data[i] = orig - opts.h;
      const double down = loss().item();
      data[i] = orig;
      const double numeric = (up - down) / (2.0 * opts.h);
      const double a = analytic[pi][i];
      double err = rel(a, numeric);
      ++res.coords_checked;
      if (opts.kink_aware && err > opts.kink_threshold) {
        // A LeakyReLU kink inside [x - h, x + h] makes the one-sided slopes
        // disagree while the one on the kink-free side still matches.
        const double right = (up - base) / opts.h;
        const double left = (base - down) / opts.h;
        const double side = std::min(rel(a, right), rel(a, left));
        if (std::abs(right - left) > std::abs(a - numeric) && side < opts.kink_threshold) {
          ++res.kinks;
          err = side;
        }
      }
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_param = name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

double finite_diff_check(const LossFn& loss, ParameterSet& params, const GradCheckOptions& opts) {
  const auto analytic = analytic_gradients(loss, params);
  return compare_gradients(loss, params, analytic, opts).max_rel_error;
}

}  // namespace hava::ad
