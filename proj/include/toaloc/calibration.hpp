// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/geometry.hpp"

#include <map>
#include <string_view>

namespace toaloc {

struct CalibrationEntry {
  double delta_T_hat = 0.0;  // meters
  int n_obs = 0;
  double std_err = 0.0;
};

/// Per-AP calibration delays learned at a surveyed training point. The
/// reference AP's entry is exactly zero by convention.
struct CalibrationTable {
  std::map<int, CalibrationEntry> entries;

  std::map<int, double> delays() const;
};

enum class CalibrationEstimator { mean, median };

std::string_view to_string(CalibrationEstimator estimator);

/// Training phase: every epoch is assumed line-of-sight, taken at
/// `known_position`, with all AP error due to delay (no position offset).
/// delta_T_j is estimated from ToA_j + d_ref - d_j over the epochs that heard
/// AP j; APs heard fewer than `min_obs` times are left out.
CalibrationTable estimate_calibration(std::span<const ToaEpoch> epochs, std::span<const AccessPoint> aps,
                                      const Point& known_position, int min_obs = 1,
                                      CalibrationEstimator estimator = CalibrationEstimator::mean);

/// Subtract each AP's table entry from its ToA. Not idempotent.
ToaEpoch apply_calibration(const ToaEpoch& epoch, const CalibrationTable& table);

}  // namespace toaloc
