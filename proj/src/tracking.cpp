// SPDX-License-Identifier: Apache-2.0
#include "toaloc/tracking.hpp"

#include "toaloc/error.hpp"

namespace toaloc {

TrackState kf_init(const PositionEstimate& first, double t0, double v_var) {
  if (!(v_var >= 0.0)) throw invalid_argument("kf_init: v_var must be >= 0");
  const int d = first.dimension();
  TrackState s;
  s.mean = Vector::Zero(2 * d);
  s.mean.head(d) = first.mean.head(d);
  s.covariance = Matrix::Zero(2 * d, 2 * d);
  s.covariance.topLeftCorner(d, d) = first.position_covariance();
  s.covariance.bottomRightCorner(d, d) = v_var * Matrix::Identity(d, d);
  s.epoch_time = t0;
  return s;
}

TrackState kf_predict(const TrackState& state, double dt, double q) {
  if (!(dt > 0.0)) throw invalid_argument("kf_predict: dt must be positive");
  if (!(q >= 0.0)) throw invalid_argument("kf_predict: q must be >= 0");
  const int d = state.dimension();
  const Matrix I = Matrix::Identity(d, d);

  Matrix F = Matrix::Identity(2 * d, 2 * d);
  F.topRightCorner(d, d) = dt * I;

  Matrix Q(2 * d, 2 * d);
  Q.topLeftCorner(d, d) = (dt * dt * dt / 3.0) * I;
  Q.topRightCorner(d, d) = (dt * dt / 2.0) * I;
  Q.bottomLeftCorner(d, d) = (dt * dt / 2.0) * I;
  Q.bottomRightCorner(d, d) = dt * I;
  Q *= q;

  TrackState next;
  next.mean = F * state.mean;
  next.covariance = F * state.covariance * F.transpose() + Q;
  next.covariance = 0.5 * (next.covariance + next.covariance.transpose());
  next.epoch_time = state.epoch_time + dt;
  return next;
}

KalmanUpdate kf_update(const TrackState& state, double dt, const PositionEstimate& estimate, double q,
                       std::optional<double> fixed_r) {
  const int d = state.dimension();
  if (estimate.dimension() != d) throw invalid_argument("kf_update: estimate dimension differs from track");

  const TrackState pred = kf_predict(state, dt, q);

  Matrix H = Matrix::Zero(d, 2 * d);
  H.leftCols(d) = Matrix::Identity(d, d);
  const Matrix R = fixed_r ? Matrix(*fixed_r * Matrix::Identity(d, d)) : estimate.position_covariance();

  KalmanUpdate out;
  out.innovation = estimate.mean.head(d) - H * pred.mean;
  out.innovation_covariance = H * pred.covariance * H.transpose() + R;
  const Eigen::LDLT<Matrix> S(out.innovation_covariance);
  const Matrix K = pred.covariance * H.transpose() * S.solve(Matrix::Identity(d, d));
  out.nis = out.innovation.dot(S.solve(out.innovation));

  const Matrix IKH = Matrix::Identity(2 * d, 2 * d) - K * H;
  out.state.mean = pred.mean + K * out.innovation;
  out.state.covariance = IKH * pred.covariance * IKH.transpose() + K * R * K.transpose();
  out.state.covariance = 0.5 * (out.state.covariance + out.state.covariance.transpose());
  out.state.epoch_time = pred.epoch_time;
  return out;
}

TrackState kf_step(const TrackState& state, double dt, const PositionEstimate& estimate, double q,
                   std::optional<double> fixed_r) {
  return kf_update(state, dt, estimate, q, fixed_r).state;
}

PositionEstimate position_fix(const Point& position, double variance) {
  const int d = position.dimension();
  PositionEstimate e;
  e.mean = Vector::Zero(d + 1);
  e.mean.head(d) = position.coords;
  e.covariance = Matrix::Identity(d + 1, d + 1) * variance;
  e.converged = true;
  return e;
}

}  // namespace toaloc
