// SPDX-License-Identifier: Apache-2.0
#include "hava/losses.hpp"

#include <cmath>

namespace hava::model {

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": shape " + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()));
  }
}

void same_shape(const ad::Value& a, const ad::Value& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape " + ad::shape_string(a.shape()) + " vs " +
                                ad::shape_string(b.shape()));
  }
}

}  // namespace

double reconstruction_loss(const Matrix& y, const Matrix& y_hat) {
  same_shape(y, y_hat, "reconstruction_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y.data()[i] - y_hat.data()[i]);
  return s;
}

double velocity_loss(const Matrix& y_prev, const Matrix& y_cur, const Matrix& y_hat_prev, const Matrix& y_hat_cur) {
  same_shape(y_prev, y_cur, "velocity_loss");
  same_shape(y_prev, y_hat_prev, "velocity_loss");
  same_shape(y_prev, y_hat_cur, "velocity_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < y_cur.size(); ++i) {
    s += std::abs((y_cur.data()[i] - y_prev.data()[i]) - (y_hat_cur.data()[i] - y_hat_prev.data()[i]));
  }
  return s;
}

double stage1_loss(std::span<const double> rec, std::span<const double> vel, double lambda) {
  require(rec.size() == vel.size(), "stage1_loss: reconstruction and velocity term counts differ");
  require(!rec.empty(), "stage1_loss: empty batch");
  require(lambda >= 0, "stage1_loss: lambda must be >= 0");
  double s = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) s += rec[i] + lambda * vel[i];
  return s / static_cast<double>(rec.size());
}

double pose_loss(const data::PoseTrack& p, const data::PoseTrack& p_hat) {
  if (p.size() != p_hat.size()) {
    throw std::invalid_argument("pose_loss: track lengths " + std::to_string(p.size()) + " and " +
                                std::to_string(p_hat.size()) + " differ");
  }
  require(!p.empty(), "pose_loss: empty tracks");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = p[i][k] - p_hat[i][k];
      s += d * d;
    }
  }
  return s / static_cast<double>(p.size());
}

ad::Value reconstruction_loss(const ad::Value& y, const ad::Value& y_hat) {
  same_shape(y, y_hat, "reconstruction_loss");
  return ad::abs_sum(ad::sub(y, y_hat));
}

ad::Value velocity_loss(const ad::Value& y_prev, const ad::Value& y_cur, const ad::Value& y_hat_prev,
                        const ad::Value& y_hat_cur) {
  same_shape(y_prev, y_cur, "velocity_loss");
  same_shape(y_prev, y_hat_prev, "velocity_loss");
  same_shape(y_prev, y_hat_cur, "velocity_loss");
  return ad::abs_sum(ad::sub(ad::sub(y_cur, y_prev), ad::sub(y_hat_cur, y_hat_prev)));
}

ad::Value pose_loss(const ad::Value& p, const ad::Value& p_hat) {
  same_shape(p, p_hat, "pose_loss");
  require(p.rank() == 2 && p.dim(1) == 3 && p.dim(0) >= 1, "pose_loss: tracks must be T x 3");
  return ad::scale(ad::square_sum(ad::sub(p, p_hat)), 1.0 / static_cast<double>(p.dim(0)));
}

}  // namespace hava::model
