// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hava/autodiff.hpp"
#include "hava/dataset.hpp"

namespace hava::model {

// Plain-value forms.

/// Entrywise L1 distance between two N x 3 vertex sets.
double reconstruction_loss(const Matrix& y, const Matrix& y_hat);
/// || (y_cur - y_prev) - (y_hat_cur - y_hat_prev) ||_1
double velocity_loss(const Matrix& y_prev, const Matrix& y_cur, const Matrix& y_hat_prev, const Matrix& y_hat_cur);
/// Mean over frames of (rec + lambda * vel).
double stage1_loss(std::span<const double> rec, std::span<const double> vel, double lambda);
/// Mean squared Euclidean distance between rotation vectors.
double pose_loss(const data::PoseTrack& p, const data::PoseTrack& p_hat);

// Differentiable forms. Predictions carry gradients; targets are constants of
// the same shape.

ad::Value reconstruction_loss(const ad::Value& y, const ad::Value& y_hat);
ad::Value velocity_loss(const ad::Value& y_prev, const ad::Value& y_cur, const ad::Value& y_hat_prev,
                        const ad::Value& y_hat_cur);
/// Squared-norm mean over rows of [T x 3] tracks.
ad::Value pose_loss(const ad::Value& p, const ad::Value& p_hat);

}  // namespace hava::model
