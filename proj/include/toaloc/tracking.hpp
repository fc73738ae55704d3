// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/ep_solver.hpp"

#include <optional>

namespace toaloc {

/// Constant-velocity track: mean = (position, velocity), 2D entries.
struct TrackState {
  Vector mean;
  Matrix covariance;
  double epoch_time = 0.0;  // seconds

  int dimension() const { return static_cast<int>(mean.size()) / 2; }
};

/// Position block from the estimate (tau dropped), zero velocity with
/// variance v_var per axis.
TrackState kf_init(const PositionEstimate& first, double t0, double v_var);

/// Prediction under white acceleration of spectral density q.
TrackState kf_predict(const TrackState& state, double dt, double q);

struct KalmanUpdate {
  TrackState state;
  Vector innovation;
  Matrix innovation_covariance;
  double nis = 0.0;  // normalized innovation squared
};

/// Predict by dt, then update with the x-part of the estimate. The
/// measurement covariance is the estimate's position covariance unless
/// `fixed_r` (per-axis variance) is given. Joseph-form covariance update.
KalmanUpdate kf_update(const TrackState& state, double dt, const PositionEstimate& estimate, double q,
                       std::optional<double> fixed_r = std::nullopt);

TrackState kf_step(const TrackState& state, double dt, const PositionEstimate& estimate, double q,
                   std::optional<double> fixed_r = std::nullopt);

/// Wrap a plain position fix with an isotropic covariance as an estimate.
PositionEstimate position_fix(const Point& position, double variance);

}  // namespace toaloc
