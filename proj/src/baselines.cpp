// SPDX-License-Identifier: Apache-2.0
#include "toaloc/baselines.hpp"

#include "toaloc/error.hpp"

#include <cmath>
#include <string>

namespace toaloc {

namespace {

struct Row {
  Vector anchor;
  double toa = 0.0;  // calibrated
};

std::vector<Row> gather(const ToaEpoch& epoch, std::span<const AccessPoint> aps, const std::map<int, double>& cal,
                        int* reference_index) {
  std::vector<Row> rows;
  *reference_index = -1;
  for (const Observation& o : epoch.observations) {
    const AccessPoint* ap = nullptr;
    for (const AccessPoint& a : aps)
      if (a.id == o.ap_id) ap = &a;
    if (ap == nullptr)
      throw invalid_argument("epoch " + std::to_string(epoch.epoch_id) + ": unknown AP id " + std::to_string(o.ap_id));
    double delay = 0.0;
    if (auto it = cal.find(o.ap_id); it != cal.end()) delay = it->second;
    if (o.ap_id == epoch.reference_ap) *reference_index = static_cast<int>(rows.size());
    rows.push_back({ap->position.coords, o.toa - delay});
  }
  return rows;
}

double residual_norm_of(const std::vector<Row>& rows, const Vector& x, double tau) {
  double ss = 0.0;
  for (const Row& r : rows) {
    const double e = r.toa - tau - (x - r.anchor).norm();
    ss += e * e;
  }
  return std::sqrt(ss);
}

double best_tau(const std::vector<Row>& rows, const Vector& x) {
  double sum = 0.0;
  for (const Row& r : rows) sum += r.toa - (x - r.anchor).norm();
  return sum / static_cast<double>(rows.size());
}

}  // namespace

std::string_view to_string(BaselineStatus status) {
  switch (status) {
    case BaselineStatus::ok: return "ok";
    case BaselineStatus::rank_deficient: return "rank_deficient";
    case BaselineStatus::not_converged: return "not_converged";
  }
  return "unknown";
}

double toa_residual_norm(const ToaEpoch& epoch, std::span<const AccessPoint> aps, const std::map<int, double>& cal,
                         const Point& x, double tau) {
  int ref = -1;
  return residual_norm_of(gather(epoch, aps, cal, &ref), x.coords, tau);
}

BaselineResult solve_linear(const ToaEpoch& epoch, std::span<const AccessPoint> aps, const std::map<int, double>& cal) {
  int ref = -1;
  const std::vector<Row> rows = gather(epoch, aps, cal, &ref);
  if (ref < 0) throw invalid_argument("solve_linear: reference AP not observed in epoch " + std::to_string(epoch.epoch_id));
  const int d = static_cast<int>(rows[ref].anchor.size());
  const std::size_t n = rows.size();
  if (n < static_cast<std::size_t>(d) + 2)
    throw invalid_argument("solve_linear: need at least " + std::to_string(d + 2) + " APs, have " + std::to_string(n));

  // Coordinates relative to the reference AP, whose ToA is the zero of the scale.
  const Vector& origin = rows[ref].anchor;
  const double t_ref = rows[ref].toa;
  Matrix A(static_cast<Eigen::Index>(n - 1), d + 1);
  Vector b(static_cast<Eigen::Index>(n - 1));
  Eigen::Index i = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<int>(j) == ref) continue;
    const Vector p = rows[j].anchor - origin;
    const double t = rows[j].toa - t_ref;
    A.row(i).head(d) = 2.0 * p.transpose();
    A(i, d) = 2.0 * t;
    b[i] = p.squaredNorm() - t * t;
    ++i;
  }

  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv[0] : 0.0;
  const double smin = sv.size() > 0 ? sv[sv.size() - 1] : 0.0;
  const bool deficient = !(smin > 0.0) || smax / smin > 1e12;

  BaselineResult out;
  const Vector solution = svd.solve(b);
  out.position = Point(Vector(solution.head(d) + origin));
  out.tau = t_ref - (out.position.coords - origin).norm();
  out.residual_norm = residual_norm_of(rows, out.position.coords, out.tau);
  out.status = deficient ? BaselineStatus::rank_deficient : BaselineStatus::ok;
  if (!out.position.finite()) {
    out.position = Point(origin);
    out.status = BaselineStatus::rank_deficient;
  }
  return out;
}

BaselineResult solve_nonlinear(const ToaEpoch& epoch, std::span<const AccessPoint> aps, const std::map<int, double>& cal,
                               const NonlinearOptions& options) {
  int ref = -1;
  const std::vector<Row> rows = gather(epoch, aps, cal, &ref);
  if (rows.empty()) throw invalid_argument("solve_nonlinear: empty epoch");
  const int d = static_cast<int>(rows.front().anchor.size());
  const std::size_t n = rows.size();
  if (n < static_cast<std::size_t>(d) + 1)
    throw invalid_argument("solve_nonlinear: need at least " + std::to_string(d + 1) + " APs, have " + std::to_string(n));

  Vector x0;
  if (options.init) {
    if (options.init->dimension() != d) throw invalid_argument("solve_nonlinear: init dimension mismatch");
    x0 = options.init->coords;
  } else {
    bool have_linear = false;
    if (ref >= 0 && n >= static_cast<std::size_t>(d) + 2) {
      const BaselineResult lin = solve_linear(epoch, aps, cal);
      if (lin.status == BaselineStatus::ok) {
        x0 = lin.position.coords;
        have_linear = true;
      }
    }
    if (!have_linear) {
      if (options.fallback_box) {
        x0 = options.fallback_box->center();
      } else {
        x0 = Vector::Zero(d);
        for (const Row& r : rows) x0 += r.anchor;
        x0 /= static_cast<double>(n);
      }
    }
  }

  Vector p(d + 1);
  p.head(d) = x0;
  p[d] = best_tau(rows, x0);

  auto residuals = [&](const Vector& params, Vector& r, Matrix* J) {
    r.resize(static_cast<Eigen::Index>(n));
    if (J) J->resize(static_cast<Eigen::Index>(n), d + 1);
    for (std::size_t j = 0; j < n; ++j) {
      const Vector diff = params.head(d) - rows[j].anchor;
      const double range = diff.norm();
      r[static_cast<Eigen::Index>(j)] = rows[j].toa - params[d] - range;
      if (J) {
        if (range > 0.0)
          J->row(static_cast<Eigen::Index>(j)).head(d) = -diff.transpose() / range;
        else
          J->row(static_cast<Eigen::Index>(j)).head(d).setZero();
        (*J)(static_cast<Eigen::Index>(j), d) = -1.0;
      }
    }
  };

  BaselineResult out;
  out.status = BaselineStatus::not_converged;
  double lambda = options.initial_damping;
  Vector r;
  Matrix J;
  residuals(p, r, &J);
  double cost = r.squaredNorm();

  for (int iter = 1; iter <= options.max_iters; ++iter) {
    out.iterations = iter;
    const Matrix JtJ = J.transpose() * J;
    const Vector g = J.transpose() * r;
    const Matrix H = JtJ + lambda * Matrix::Identity(d + 1, d + 1);
    const Vector step = -H.ldlt().solve(g);
    if (!step.allFinite()) break;

    Vector trial_r;
    const Vector trial = p + step;
    residuals(trial, trial_r, nullptr);
    const double trial_cost = trial_r.squaredNorm();
    const bool small = step.norm() < options.step_tol;

    if (trial_cost <= cost) {
      p = trial;
      cost = trial_cost;
      r = trial_r;
      residuals(p, r, &J);
      lambda = std::max(lambda * 0.1, 1e-12);
      if (small) {
        out.status = BaselineStatus::ok;
        break;
      }
    } else {
      lambda *= 10.0;
      // No representable improvement left around this point.
      if (small || lambda > 1e12) {
        out.status = BaselineStatus::ok;
        break;
      }
    }
  }

  out.position = Point(Vector(p.head(d)));
  out.tau = p[d];
  out.residual_norm = std::sqrt(cost);
  return out;
}

}  // namespace toaloc
