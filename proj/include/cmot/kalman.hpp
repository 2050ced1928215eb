#pragma once

// Constant-velocity Kalman filter over (cx, cy, aspect, height) with noise
// proportional to the object height.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "cmot/error.hpp"
#include "cmot/model.hpp"

namespace cmot {

using Vector4 = Eigen::Matrix<double, 4, 1>;
using Vector8 = Eigen::Matrix<double, 8, 1>;
using Matrix4 = Eigen::Matrix<double, 4, 4>;
using Matrix8 = Eigen::Matrix<double, 8, 8>;
using Matrix48 = Eigen::Matrix<double, 4, 8>;

struct KalmanParams {
  double std_weight_position = 1.0 / 20.0;
  double std_weight_velocity = 1.0 / 160.0;
  // Multiplies every measurement standard deviation.
  double measurement_scale = 1.0;
};

struct KalmanState {
  Vector8 mean = Vector8::Zero();
  Matrix8 covariance = Matrix8::Identity();
};

inline Vector4 to_measurement(const BBox& b) {
  const Point2 c = b.center();
  return {c.x, c.y, b.w / b.h, b.h};
}

inline BBox box_from_state(const Vector8& mean) {
  const double h = mean(3);
  const double w = mean(2) * h;
  return BBox::from_center({mean(0), mean(1)}, w, h);
}

namespace detail {

inline Matrix8 motion_matrix() {
  Matrix8 f = Matrix8::Identity();
  for (int i = 0; i < 4; ++i) f(i, 4 + i) = 1.0;
  return f;
}

inline Matrix48 observation_matrix() {
  Matrix48 h = Matrix48::Zero();
  for (int i = 0; i < 4; ++i) h(i, i) = 1.0;
  return h;
}

inline Matrix4 measurement_noise(const Vector8& mean, const KalmanParams& p) {
  const double h = mean(3);
  Vector4 std{p.std_weight_position * h, p.std_weight_position * h, 1e-1,
              p.std_weight_position * h};
  std *= p.measurement_scale;
  return std.array().square().matrix().asDiagonal();
}

}  // namespace detail

inline KalmanState kf_initiate(const Detection& det, const KalmanParams& p = {}) {
  if (!det.bbox.valid()) fail(Errc::invalid_argument, "kf_initiate: invalid box");
  KalmanState s;
  s.mean.head<4>() = to_measurement(det.bbox);
  s.mean.tail<4>().setZero();
  const double h = det.bbox.h;
  Vector8 std;
  std << 2 * p.std_weight_position * h, 2 * p.std_weight_position * h, 1e-2,
      2 * p.std_weight_position * h, 10 * p.std_weight_velocity * h,
      10 * p.std_weight_velocity * h, 1e-5, 10 * p.std_weight_velocity * h;
  s.covariance = std.array().square().matrix().asDiagonal();
  return s;
}

inline KalmanState kf_predict(const KalmanState& s, const KalmanParams& p = {}) {
  const double h = s.mean(3);
  Vector8 std;
  std << p.std_weight_position * h, p.std_weight_position * h, 1e-2, p.std_weight_position * h,
      p.std_weight_velocity * h, p.std_weight_velocity * h, 1e-5, p.std_weight_velocity * h;
  const Matrix8 q = std.array().square().matrix().asDiagonal();
  static const Matrix8 f = detail::motion_matrix();
  KalmanState out;
  out.mean = f * s.mean;
  out.covariance = f * s.covariance * f.transpose() + q;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

struct Projection {
  Vector4 mean;
  Matrix4 covariance;  // innovation covariance H P H^T + R
};

inline Projection kf_project(const KalmanState& s, const KalmanParams& p = {}) {
  static const Matrix48 h = detail::observation_matrix();
  return {h * s.mean, h * s.covariance * h.transpose() + detail::measurement_noise(s.mean, p)};
}

// Joseph-form update; keeps the posterior symmetric positive semidefinite.
inline KalmanState kf_update(const KalmanState& s, const Detection& det, const KalmanParams& p = {}) {
  static const Matrix48 h = detail::observation_matrix();
  const Projection proj = kf_project(s, p);
  const Eigen::LLT<Matrix4> llt(proj.covariance);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 1e-300).all())
    fail(Errc::singular, "kf_update: innovation covariance is not positive definite");
  // K = P H^T S^-1, computed as (S^-1 H P)^T.
  const Eigen::Matrix<double, 8, 4> gain = llt.solve(h * s.covariance).transpose();
  const Vector4 innovation = to_measurement(det.bbox) - proj.mean;
  KalmanState out;
  out.mean = s.mean + gain * innovation;
  const Matrix8 ikh = Matrix8::Identity() - gain * h;
  const Matrix4 r = detail::measurement_noise(s.mean, p);
  out.covariance = ikh * s.covariance * ikh.transpose() + gain * r * gain.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

inline double squared_mahalanobis(const Vector4& mean, const Matrix4& cov, const Vector4& z) {
  const Eigen::LLT<Matrix4> llt(cov);
  if (llt.info() != Eigen::Success || !(llt.matrixL().toDenseMatrix().diagonal().array() > 1e-300).all())
    fail(Errc::singular, "mahalanobis: covariance is not positive definite");
  const Vector4 d = z - mean;
  const Vector4 y = llt.matrixL().solve(d);
  return y.squaredNorm();
}

// Squared Mahalanobis distance of a detection to the projected state.
inline double mahalanobis(const KalmanState& s, const Detection& det, const KalmanParams& p = {}) {
  const Projection proj = kf_project(s, p);
  return squared_mahalanobis(proj.mean, proj.covariance, to_measurement(det.bbox));
}

}  // namespace cmot
