// SPDX-License-Identifier: Apache-2.0
#include "toaloc/posterior.hpp"

#include "toaloc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

namespace toaloc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Components below 1e-300 of the running sum do not change a double.
constexpr double kTruncateNats = 690.8;
// Lattice points with a factor this far below its peak are skipped.
constexpr double kPruneNats = 72.0;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

/// Cached log-masses so the mixture sum can be evaluated millions of times.
class MixtureEvaluator {
public:
  MixtureEvaluator(const NlosPrior& prior, double sigma) : spacing_(prior.spacing()) {
    log_pi_.reserve(prior.size());
    for (double m : prior.masses()) {
      log_pi_.push_back(m > 0.0 ? std::log(m) : kNegInf);
      log_pi_max_ = std::max(log_pi_max_, log_pi_.back());
    }
    inv_two_var_ = 1.0 / (2.0 * sigma * sigma);
    log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi * sigma * sigma);
  }

  double log_norm() const { return log_norm_; }

  double operator()(double residual) const {
    const auto n = static_cast<long>(log_pi_.size());
    long start = std::lround(residual / spacing_);
    start = std::clamp(start, 0L, n - 1);

    double m = kNegInf;
    double s = 0.0;
    auto add = [&](double e) {
      if (e > m) {
        s = s * std::exp(m - e) + 1.0;
        m = e;
      } else {
        s += std::exp(e - m);
      }
    };
    auto exhausted = [&](double gap) {
      return m != kNegInf && log_pi_max_ - gap * gap * inv_two_var_ < m + std::log(s) - kTruncateNats;
    };

    for (long l = start; l < n; ++l) {
      const double gap = residual - static_cast<double>(l) * spacing_;
      if (exhausted(gap)) break;
      if (log_pi_[l] != kNegInf) add(log_pi_[l] - gap * gap * inv_two_var_);
    }
    for (long l = start - 1; l >= 0; --l) {
      const double gap = residual - static_cast<double>(l) * spacing_;
      if (exhausted(gap)) break;
      if (log_pi_[l] != kNegInf) add(log_pi_[l] - gap * gap * inv_two_var_);
    }
    return m + std::log(s) + log_norm_;
  }

private:
  std::vector<double> log_pi_;
  double log_pi_max_ = kNegInf;
  double spacing_;
  double inv_two_var_;
  double log_norm_;
};

double support_max_bias(const NlosPrior& prior) {
  auto masses = prior.masses();
  for (std::size_t l = masses.size(); l-- > 0;)
    if (masses[l] > 0.0) return prior.bias_value(l);
  return 0.0;
}

/// Weighted moment accumulator kept relative to its own running maximum.
struct MomentAccumulator {
  double log_max = kNegInf;
  double weight = 0.0;
  Vector first;
  Matrix second;
  double log_skipped = kNegInf;

  explicit MomentAccumulator(int dim) : first(Vector::Zero(dim)), second(Matrix::Zero(dim, dim)) {}

  void add(double log_p, const Vector& dz) {
    if (log_p > log_max) {
      const double scale = log_max == kNegInf ? 0.0 : std::exp(log_max - log_p);
      weight *= scale;
      first *= scale;
      second *= scale;
      log_max = log_p;
    }
    const double w = std::exp(log_p - log_max);
    weight += w;
    first.noalias() += w * dz;
    second.noalias() += w * dz * dz.transpose();
  }

  void merge(const MomentAccumulator& o) {
    log_skipped = log_add(log_skipped, o.log_skipped);
    if (o.log_max == kNegInf) return;
    if (o.log_max > log_max) {
      const double scale = log_max == kNegInf ? 0.0 : std::exp(log_max - o.log_max);
      weight = weight * scale + o.weight;
      first = first * scale + o.first;
      second = second * scale + o.second;
      log_max = o.log_max;
    } else {
      const double scale = std::exp(o.log_max - log_max);
      weight += o.weight * scale;
      first += o.first * scale;
      second += o.second * scale;
    }
  }
};

struct Lattice {
  int dim = 0;
  std::vector<long> counts;  // per spatial axis
  Vector lo;
  double step = 0.0;
  double tau_lo = 0.0;
  double tau_step = 0.0;
  long tau_count = 0;

  long spatial_points() const {
    long n = 1;
    for (long c : counts) n *= c;
    return n;
  }
  long row_size() const { return spatial_points() / counts[0]; }

  Vector node(long flat) const {
    Vector x(dim);
    for (int k = dim - 1; k >= 0; --k) {
      x[k] = lo[k] + static_cast<double>(flat % counts[k]) * step;
      flat /= counts[k];
    }
    return x;
  }
};

}  // namespace

std::vector<RangeMeasurement> resolve_measurements(const SolverInputs& in) {
  std::vector<RangeMeasurement> out;
  out.reserve(in.epoch.observations.size());
  for (const Observation& o : in.epoch.observations) {
    const AccessPoint* ap = nullptr;
    for (const AccessPoint& a : in.aps)
      if (a.id == o.ap_id) ap = &a;
    if (ap == nullptr)
      throw invalid_argument("epoch " + std::to_string(in.epoch.epoch_id) + ": unknown AP id " + std::to_string(o.ap_id));
    RangeMeasurement m;
    m.ap_id = o.ap_id;
    m.anchor = ap->position.coords;
    m.toa = o.toa;
    if (auto it = in.cal_delays.find(o.ap_id); it != in.cal_delays.end()) m.delay = it->second;
    out.push_back(std::move(m));
  }
  return out;
}

double log_mixture_likelihood(double residual, const NlosPrior& prior, double sigma_clk) {
  return MixtureEvaluator(prior, sigma_clk)(residual);
}

double log_posterior(const Point& x, double tau, const SolverInputs& in) {
  const MixtureEvaluator mixture(in.prior, in.sigma_clk);
  double total = 0.0;
  for (const RangeMeasurement& m : resolve_measurements(in)) {
    if (m.anchor.size() != x.coords.size()) throw invalid_argument("log_posterior: dimension mismatch");
    const double d = (x.coords - m.anchor).norm();
    total += mixture(m.toa - tau - d - m.delay) - std::log(d + in.sigma_clk);
  }
  return total;
}

std::pair<double, double> default_tau_range(const SolverInputs& in, const BoundingBox& box) {
  const int dim = box.dimension();
  double farthest = 0.0;
  for (const AccessPoint& ap : in.aps) {
    for (long corner = 0; corner < (1L << dim); ++corner) {
      Vector c(dim);
      for (int k = 0; k < dim; ++k) c[k] = (corner >> k) & 1 ? box.hi[k] : box.lo[k];
      farthest = std::max(farthest, (c - ap.position.coords).norm());
    }
  }
  return {-farthest - support_max_bias(in.prior) - in.sigma_clk, in.sigma_clk};
}

GridMoments grid_moments(const SolverInputs& in, const BoundingBox& box, const GridSpec& spec) {
  const std::vector<RangeMeasurement> meas = resolve_measurements(in);
  if (meas.empty()) throw invalid_argument("grid_moments: epoch has no observations");
  if (!(spec.step > 0.0)) throw invalid_argument("grid_moments: step must be positive");

  Lattice lat;
  lat.dim = box.dimension();
  for (const RangeMeasurement& m : meas)
    if (m.anchor.size() != lat.dim) throw invalid_argument("grid_moments: box and AP dimensions differ");
  lat.lo = box.lo;
  lat.step = spec.step;
  for (int k = 0; k < lat.dim; ++k) {
    const double extent = box.hi[k] - box.lo[k];
    if (!(extent > 0.0)) throw invalid_argument("grid_moments: box has non-positive extent");
    lat.counts.push_back(static_cast<long>(std::floor(extent / lat.step + 1e-9)) + 1);
  }
  const auto [tau_lo, tau_hi] = spec.tau_range ? *spec.tau_range : default_tau_range(in, box);
  lat.tau_step = spec.tau_step.value_or(spec.step);
  if (!(lat.tau_step > 0.0) || !(tau_hi > tau_lo)) throw invalid_argument("grid_moments: bad tau range or step");
  lat.tau_lo = tau_lo;
  lat.tau_count = static_cast<long>(std::floor((tau_hi - tau_lo) / lat.tau_step + 1e-9)) + 1;

  const double sigma = in.sigma_clk;
  const double margin = sigma * std::sqrt(2.0 * kPruneNats);
  const double max_bias = support_max_bias(in.prior);
  const MixtureEvaluator mixture(in.prior, sigma);

  // Active tau-window of a spatial node: outside it at least one factor has
  // every mixture component more than `margin` away from its residual.
  auto window = [&](const Vector& x, std::vector<double>& offsets, double& log_bound) {
    double lo_c = -std::numeric_limits<double>::infinity();
    double hi_c = std::numeric_limits<double>::infinity();
    log_bound = 0.0;
    for (std::size_t j = 0; j < meas.size(); ++j) {
      const double d = (x - meas[j].anchor).norm();
      const double c = meas[j].toa - d - meas[j].delay;
      offsets[j] = d;
      lo_c = std::max(lo_c, c - max_bias - margin);
      hi_c = std::min(hi_c, c + margin);
      log_bound += mixture.log_norm() - std::log(d + sigma);
    }
    log_bound -= kPruneNats;
    const long k_lo = std::max(0L, static_cast<long>(std::ceil((lo_c - lat.tau_lo) / lat.tau_step)));
    const long k_hi = std::min(lat.tau_count - 1, static_cast<long>(std::floor((hi_c - lat.tau_lo) / lat.tau_step)));
    return std::pair<long, long>{k_lo, k_hi};
  };

  const long n_spatial = lat.spatial_points();
  const long row = lat.row_size();
  {
    std::vector<double> scratch(meas.size());
    double unused = 0.0;
    std::size_t active = 0;
    for (long f = 0; f < n_spatial; ++f) {
      auto [k_lo, k_hi] = window(lat.node(f), scratch, unused);
      if (k_hi >= k_lo) active += static_cast<std::size_t>(k_hi - k_lo + 1);
    }
    if (active > spec.max_points)
      throw invalid_argument("grid_moments: budget exceeded, need " + std::to_string(active) + " points, allowed " +
                             std::to_string(spec.max_points));
  }

  const int zdim = lat.dim + 1;
  Vector origin(zdim);
  origin.head(lat.dim) = box.center();
  origin[lat.dim] = 0.5 * (tau_lo + tau_hi);

  std::vector<MomentAccumulator> rows(static_cast<std::size_t>(lat.counts[0]), MomentAccumulator(zdim));
  std::vector<std::size_t> evaluated(rows.size(), 0);

  auto do_row = [&](long r) {
    MomentAccumulator& acc = rows[static_cast<std::size_t>(r)];
    std::vector<double> dist(meas.size());
    Vector dz(zdim);
    for (long f = r * row; f < (r + 1) * row; ++f) {
      const Vector x = lat.node(f);
      double log_bound = 0.0;
      auto [k_lo, k_hi] = window(x, dist, log_bound);
      const long active = k_hi >= k_lo ? k_hi - k_lo + 1 : 0;
      const long skipped = lat.tau_count - active;
      if (skipped > 0) acc.log_skipped = log_add(acc.log_skipped, log_bound + std::log(static_cast<double>(skipped)));
      dz.head(lat.dim) = x - origin.head(lat.dim);
      for (long k = k_lo; k <= k_hi; ++k) {
        const double tau = lat.tau_lo + static_cast<double>(k) * lat.tau_step;
        double lp = 0.0;
        for (std::size_t j = 0; j < meas.size(); ++j)
          lp += mixture(meas[j].toa - tau - dist[j] - meas[j].delay) - std::log(dist[j] + sigma);
        dz[lat.dim] = tau - origin[lat.dim];
        acc.add(lp, dz);
      }
      evaluated[static_cast<std::size_t>(r)] += static_cast<std::size_t>(active);
    }
  };

  const unsigned threads = std::max(1u, spec.threads);
  if (threads == 1) {
    for (long r = 0; r < lat.counts[0]; ++r) do_row(r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (long r = t; r < lat.counts[0]; r += threads) do_row(r);
      });
    for (auto& th : pool) th.join();
  }

  // Fixed row order keeps the result independent of the thread count.
  MomentAccumulator total(zdim);
  std::size_t n_eval = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    total.merge(rows[r]);
    n_eval += evaluated[r];
  }
  if (total.log_max == kNegInf || !(total.weight > 0.0))
    throw runtime_error("grid_moments: no lattice point carries posterior mass");

  GridMoments out;
  const Vector centered = total.first / total.weight;
  out.mean = centered + origin;
  out.covariance = total.second / total.weight - centered * centered.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  const double log_cell = lat.dim * std::log(lat.step) + std::log(lat.tau_step);
  const double log_retained = total.log_max + std::log(total.weight);
  out.log_evidence = log_retained + log_cell;
  out.points_evaluated = n_eval;
  out.truncation_bound = total.log_skipped == kNegInf ? 0.0 : std::exp(total.log_skipped - log_retained);
  return out;
}

}  // namespace toaloc
