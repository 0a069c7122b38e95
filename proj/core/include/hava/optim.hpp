// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hava/layers.hpp"

namespace hava::ad {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

/// One bias-corrected Adam update over every parameter, then zeroes the
/// gradients. Parameters without a gradient are treated as having g = 0.
void adam_step(ParameterSet& params, AdamState& state);

using LossFn = std::function<Value()>;

struct GradCheckOptions {
  double h = 1e-5;
  /// 0 checks every coordinate; otherwise a seeded sample of this many per
  /// parameter tensor (always including the first and last coordinate).
  std::size_t max_coords_per_param = 0;
  std::uint64_t sample_seed = 0;
  /// When the central difference disagrees by more than kink_threshold,
  /// accept the coordinate if one one-sided difference matches and the two
  /// sides disagree (a non-differentiable point inside the stencil).
  bool kink_aware = true;
  double kink_threshold = 1e-4;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  /// Coordinates judged by a one-sided difference.
  std::size_t kinks = 0;
};

/// Zeroes gradients, runs loss() once and backpropagates; returns a copy of
/// every parameter's gradient in ParameterSet order.
std::vector<std::vector<double>> analytic_gradients(const LossFn& loss, ParameterSet& params);

/// Central differences per coordinate against `analytic`. The relative error
/// of one coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckResult compare_gradients(const LossFn& loss, ParameterSet& params,
                                  const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opts = {});

/// analytic_gradients followed by compare_gradients; returns the max error.
double finite_diff_check(const LossFn& loss, ParameterSet& params, const GradCheckOptions& opts = {});

}  // namespace hava::ad
