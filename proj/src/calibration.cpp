// SPDX-License-Identifier: Apache-2.0
#include "toaloc/calibration.hpp"

#include "toaloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace toaloc {

std::map<int, double> CalibrationTable::delays() const {
  std::map<int, double> out;
  for (const auto& [id, e] : entries) out[id] = e.delta_T_hat;
  return out;
}

std::string_view to_string(CalibrationEstimator estimator) {
  return estimator == CalibrationEstimator::median ? "median" : "mean";
}

CalibrationTable estimate_calibration(std::span<const ToaEpoch> epochs, std::span<const AccessPoint> aps,
                                      const Point& known_position, int min_obs, CalibrationEstimator estimator) {
  if (min_obs < 1) throw invalid_argument("estimate_calibration: min_obs must be >= 1");

  auto find_ap = [&](int id) -> const AccessPoint& {
    for (const AccessPoint& ap : aps)
      if (ap.id == id) return ap;
    throw invalid_argument("estimate_calibration: unknown AP id " + std::to_string(id));
  };

  std::map<int, std::vector<double>> samples;
  int reference = 0;
  bool any_reference = false;
  for (const ToaEpoch& e : epochs) {
    if (e.find(e.reference_ap) == nullptr) continue;
    if (any_reference && e.reference_ap != reference)
      throw invalid_argument("estimate_calibration: epochs disagree on the reference AP");
    reference = e.reference_ap;
    any_reference = true;

    const double d_ref = distance(known_position, find_ap(e.reference_ap).position);
    for (const Observation& o : e.observations) {
      if (o.ap_id == e.reference_ap) continue;
      const double d = distance(known_position, find_ap(o.ap_id).position);
      samples[o.ap_id].push_back(o.toa + d_ref - d);
    }
  }
  if (!any_reference) throw invalid_argument("estimate_calibration: no epoch contains the reference AP");

  CalibrationTable table;
  int ref_count = 0;
  for (const ToaEpoch& e : epochs)
    if (e.find(e.reference_ap) != nullptr) ++ref_count;
  table.entries[reference] = CalibrationEntry{0.0, ref_count, 0.0};

  for (auto& [id, v] : samples) {
    if (static_cast<int>(v.size()) < min_obs) continue;
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double s : v) mean += s;
    mean /= n;
    double ss = 0.0;
    for (double s : v) ss += (s - mean) * (s - mean);
    const double sd = v.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

    CalibrationEntry entry;
    entry.n_obs = static_cast<int>(v.size());
    entry.std_err = sd / std::sqrt(n);
    if (estimator == CalibrationEstimator::median) {
      std::sort(v.begin(), v.end());
      const std::size_t mid = v.size() / 2;
      entry.delta_T_hat = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
    } else {
      entry.delta_T_hat = mean;
    }
    table.entries[id] = entry;
  }
  return table;
}

ToaEpoch apply_calibration(const ToaEpoch& epoch, const CalibrationTable& table) {
  ToaEpoch out = epoch;
  for (Observation& o : out.observations) {
    if (o.ap_id == out.reference_ap) continue;
    if (auto it = table.entries.find(o.ap_id); it != table.entries.end()) o.toa -= it->second.delta_T_hat;
  }
  return out;
}

}  // namespace toaloc
