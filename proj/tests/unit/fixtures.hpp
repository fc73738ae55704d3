// Shared test scenarios.
#pragma once

#include "toaloc/ep_solver.hpp"
#include "toaloc/simulator.hpp"

#include <cmath>
#include <vector>

namespace fixtures {

using namespace toaloc;

// APs at the corners of a 100 m square, device at (30, 40).
inline Scenario square4() {
  Scenario s;
  s.dimension = 2;
  s.aps = {{1, {0, 0}, {}, 0.0}, {2, {100, 0}, {}, 0.0}, {3, {0, 100}, {}, 0.0}, {4, {100, 100}, {}, 0.0}};
  s.device_positions = {{30, 40}};
  s.fit_bounding_box();
  return s;
}

inline ErrorModel noiseless() {
  ErrorModel m;
  m.sigma_clk = 0.0;
  return m;
}

// Relative ToAs of `device` computed directly from the AP coordinates.
inline ToaEpoch exact_epoch(const std::vector<AccessPoint>& aps, const Point& device, int epoch_id = 0) {
  ToaEpoch e;
  e.epoch_id = epoch_id;
  e.reference_ap = aps.front().id;
  auto range = [&](const AccessPoint& ap) {
    double ss = 0.0;
    for (int k = 0; k < device.dimension(); ++k) ss += (device[k] - ap.position[k]) * (device[k] - ap.position[k]);
    return std::sqrt(ss);
  };
  for (const AccessPoint& ap : aps) e.observations.push_back({ap.id, range(ap) - range(aps.front())});
  e.observations.front().toa = 0.0;
  return e;
}

// Eight APs around a 200 m square.
inline std::vector<AccessPoint> ring8() {
  return {{1, {0, 0}, {}, 0.0},    {2, {200, 0}, {}, 0.0},   {3, {0, 200}, {}, 0.0},   {4, {200, 200}, {}, 0.0},
          {5, {100, -20}, {}, 0.0}, {6, {-20, 100}, {}, 0.0}, {7, {220, 100}, {}, 0.0}, {8, {100, 220}, {}, 0.0}};
}

}  // namespace fixtures
