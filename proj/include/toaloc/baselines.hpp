// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/geometry.hpp"

#include <map>
#include <optional>
#include <string_view>

namespace toaloc {

enum class BaselineStatus { ok, rank_deficient, not_converged };

std::string_view to_string(BaselineStatus status);

struct BaselineResult {
  Point position;
  double tau = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  BaselineStatus status = BaselineStatus::ok;
};

/// Linearized TDoA least squares. Subtracting the reference squared-range
/// equation from every other one gives a system linear in (x, d_ref):
///   2 (a_j - a_ref)^T x + 2 t_j d_ref = |a_j|^2 - |a_ref|^2 - t_j^2
/// (coordinates taken relative to the reference AP). Needs N >= D + 2.
BaselineResult solve_linear(const ToaEpoch& epoch, std::span<const AccessPoint> aps,
                            const std::map<int, double>& cal_delays = {});

struct NonlinearOptions {
  std::optional<Point> init;                 // nullopt: linear solution, else box centre
  std::optional<BoundingBox> fallback_box;   // used when the linear solve fails
  int max_iters = 100;
  double step_tol = 1e-8;                    // meters
  double initial_damping = 1e-3;
};

/// Levenberg-Marquardt on r_j = ToA_j - delay_j - tau - |x - a_j| over (x, tau)
/// with unit weights. Needs N >= D + 1.
BaselineResult solve_nonlinear(const ToaEpoch& epoch, std::span<const AccessPoint> aps,
                               const std::map<int, double>& cal_delays = {}, const NonlinearOptions& options = {});

/// sqrt(sum_j r_j^2) of the ToA residuals at (x, tau).
double toa_residual_norm(const ToaEpoch& epoch, std::span<const AccessPoint> aps, const std::map<int, double>& cal_delays,
                         const Point& x, double tau);

}  // namespace toaloc
