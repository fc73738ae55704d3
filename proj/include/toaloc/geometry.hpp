// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace toaloc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A position in meters. The dimension (2 or 3) is a runtime value so planar
/// and volumetric scenarios share one code path.
struct Point {
  Vector coords;

  Point() = default;
  explicit Point(Vector c) : coords(std::move(c)) {}
  Point(std::initializer_list<double> values);

  static Point zero(int dimension) { return Point(Vector::Zero(dimension)); }

  int dimension() const { return static_cast<int>(coords.size()); }
  double operator[](int i) const { return coords[i]; }
  bool finite() const { return coords.allFinite(); }
};

/// Euclidean distance. Throws on dimension mismatch.
double distance(const Point& a, const Point& b);

struct AccessPoint {
  int id = 0;
  Point position;              // nominal, as surveyed
  Point true_position_offset;  // simulation ground truth; empty means zero
  double true_cal_delay = 0.0; // simulation ground truth, meters

  Point true_position() const;
};

/// Axis-aligned box. Used to seed the EP state and to bound the grid oracle.
struct BoundingBox {
  Vector lo;
  Vector hi;

  int dimension() const { return static_cast<int>(lo.size()); }
  Vector center() const { return 0.5 * (lo + hi); }
  Vector extent() const { return hi - lo; }
  bool contains(const Point& p) const;

  /// Smallest box holding every point, grown by `margin` on each side.
  static BoundingBox enclosing(std::span<const Point> points, double margin = 0.0);
  static BoundingBox square(const Point& lo, double side);
};

/// AP geography plus the device trajectory. aps.front() is the reference AP.
struct Scenario {
  int dimension = 2;
  std::vector<AccessPoint> aps;
  std::vector<Point> device_positions;
  BoundingBox bounding_box;

  const AccessPoint& reference() const { return aps.front(); }
  const AccessPoint* find_ap(int id) const;

  /// Recompute bounding_box from the AP positions.
  void fit_bounding_box(double margin = 0.0);
};

/// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate_scenario(const Scenario& scenario);

struct Observation {
  int ap_id = 0;
  double toa = 0.0;  // meters, relative to the reference AP
};

/// One transmission's relative ToAs. The reference AP's ToA is exactly 0.
struct ToaEpoch {
  int epoch_id = 0;
  int reference_ap = 0;
  std::vector<Observation> observations;

  std::size_t heard_count() const { return observations.size(); }
  const Observation* find(int ap_id) const;
};

std::vector<std::string> validate_epoch(const ToaEpoch& epoch);

}  // namespace toaloc
