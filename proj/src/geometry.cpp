// SPDX-License-Identifier: Apache-2.0
#include "toaloc/geometry.hpp"

#include "toaloc/error.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace toaloc {

Point::Point(std::initializer_list<double> values) : coords(static_cast<Eigen::Index>(values.size())) {
  Eigen::Index i = 0;
  for (double v : values) coords[i++] = v;
}

double distance(const Point& a, const Point& b) {
  if (a.dimension() != b.dimension()) {
    std::ostringstream os;
    os << "dimension mismatch: " << a.dimension() << " vs " << b.dimension();
    throw invalid_argument(os.str());
  }
  return (a.coords - b.coords).norm();
}

Point AccessPoint::true_position() const {
  if (true_position_offset.dimension() == 0) return position;
  return Point(position.coords + true_position_offset.coords);
}

bool BoundingBox::contains(const Point& p) const {
  if (p.dimension() != dimension()) return false;
  return (p.coords.array() >= lo.array()).all() && (p.coords.array() <= hi.array()).all();
}

BoundingBox BoundingBox::enclosing(std::span<const Point> points, double margin) {
  if (points.empty()) throw invalid_argument("bounding box of an empty point set");
  BoundingBox box{points.front().coords, points.front().coords};
  for (const Point& p : points) {
    box.lo = box.lo.cwiseMin(p.coords);
    box.hi = box.hi.cwiseMax(p.coords);
  }
  box.lo.array() -= margin;
  box.hi.array() += margin;
  return box;
}

BoundingBox BoundingBox::square(const Point& lo, double side) {
  return BoundingBox{lo.coords, (lo.coords.array() + side).matrix()};
}

const AccessPoint* Scenario::find_ap(int id) const {
  for (const AccessPoint& ap : aps)
    if (ap.id == id) return &ap;
  return nullptr;
}

void Scenario::fit_bounding_box(double margin) {
  std::vector<Point> positions;
  positions.reserve(aps.size());
  for (const AccessPoint& ap : aps) positions.push_back(ap.position);
  bounding_box = BoundingBox::enclosing(positions, margin);
}

std::vector<std::string> validate_scenario(const Scenario& s) {
  std::vector<std::string> out;
  auto say = [&out](auto&&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    out.push_back(os.str());
  };

  if (s.dimension != 2 && s.dimension != 3) say("unsupported dimension ", s.dimension);

  const std::size_t needed = static_cast<std::size_t>(s.dimension) + 1;
  if (s.aps.size() < needed) say("insufficient APs: need ≥ ", needed);

  std::set<int> seen;
  std::set<int> reported;
  for (const AccessPoint& ap : s.aps) {
    if (!seen.insert(ap.id).second && reported.insert(ap.id).second) say("duplicate id ", ap.id);
    if (ap.position.dimension() != s.dimension)
      say("AP ", ap.id, ": position has dimension ", ap.position.dimension());
    else if (!ap.position.finite())
      say("AP ", ap.id, ": non-finite position");
    if (ap.true_position_offset.dimension() != 0 && ap.true_position_offset.dimension() != s.dimension)
      say("AP ", ap.id, ": position offset has dimension ", ap.true_position_offset.dimension());
    if (!std::isfinite(ap.true_cal_delay)) say("AP ", ap.id, ": non-finite calibration delay");
  }

  for (std::size_t i = 0; i < s.device_positions.size(); ++i) {
    const Point& p = s.device_positions[i];
    if (p.dimension() != s.dimension)
      say("device position ", i, ": dimension ", p.dimension());
    else if (!p.finite())
      say("device position ", i, ": non-finite coordinates");
  }

  const BoundingBox& box = s.bounding_box;
  if (box.dimension() != s.dimension || box.hi.size() != box.lo.size()) {
    say("bounding box: dimension ", box.dimension());
  } else {
    for (int k = 0; k < box.dimension(); ++k)
      if (!(box.hi[k] - box.lo[k] > 0.0)) say("bounding box: non-positive extent on axis ", k);
  }
  return out;
}

const Observation* ToaEpoch::find(int ap_id) const {
  for (const Observation& o : observations)
    if (o.ap_id == ap_id) return &o;
  return nullptr;
}

std::vector<std::string> validate_epoch(const ToaEpoch& e) {
  std::vector<std::string> out;
  std::set<int> seen;
  for (const Observation& o : e.observations) {
    if (!seen.insert(o.ap_id).second) out.push_back("epoch " + std::to_string(e.epoch_id) + ": duplicate AP " + std::to_string(o.ap_id));
    if (!std::isfinite(o.toa)) out.push_back("epoch " + std::to_string(e.epoch_id) + ": non-finite ToA for AP " + std::to_string(o.ap_id));
  }
  if (e.observations.size() < 2) out.push_back("epoch " + std::to_string(e.epoch_id) + ": fewer than 2 observations");
  if (const Observation* ref = e.find(e.reference_ap); ref != nullptr && ref->toa != 0.0)
    out.push_back("epoch " + std::to_string(e.epoch_id) + ": reference ToA is not 0");
  return out;
}

}  // namespace toaloc
