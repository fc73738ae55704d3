// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/geometry.hpp"
#include "toaloc/nlos_prior.hpp"

#include <cstdint>
#include <map>
#include <optional>

namespace toaloc {

/// Everything the probabilistic solvers condition on for one epoch.
struct SolverInputs {
  ToaEpoch epoch;
  std::vector<AccessPoint> aps;      // nominal positions are used
  NlosPrior prior;
  std::map<int, double> cal_delays;  // per-AP delay estimates, missing = 0
  double sigma_clk = 1.0;

  SolverInputs(ToaEpoch e, std::vector<AccessPoint> a, NlosPrior p, double sigma)
      : epoch(std::move(e)), aps(std::move(a)), prior(std::move(p)), sigma_clk(sigma) {}
};

/// One observation resolved against its AP.
struct RangeMeasurement {
  int ap_id = 0;
  Vector anchor;        // nominal AP position
  double toa = 0.0;
  double delay = 0.0;   // calibration delay estimate subtracted from toa
};

/// Resolve observations to AP positions; throws when an ap_id is unknown.
std::vector<RangeMeasurement> resolve_measurements(const SolverInputs& in);

/// log of  sum_l pi_l N(residual - b_l; 0, sigma^2), the NLOS mixture
/// likelihood of one measurement given its residual toa - tau - d - delay.
double log_mixture_likelihood(double residual, const NlosPrior& prior, double sigma_clk);

/// Unnormalized log-posterior over (x, tau): the NLOS mixture likelihood of
/// every heard AP times the range prior 1 / (d_j + sigma_clk).
double log_posterior(const Point& x, double tau, const SolverInputs& in);

struct GridSpec {
  double step = 0.25;                       // spatial lattice step, meters
  std::optional<double> tau_step;           // defaults to step
  std::optional<std::pair<double, double>> tau_range;  // default derived from the box
  std::size_t max_points = 10'000'000;      // budget on evaluated lattice points
  unsigned threads = 1;
};

struct GridMoments {
  Vector mean;          // (x, tau)
  Matrix covariance;
  double log_evidence = 0.0;
  std::size_t points_evaluated = 0;
  // Upper bound on the discarded mass relative to the retained mass.
  double truncation_bound = 0.0;
};

/// Brute-force moments of the posterior restricted to `box` x tau range.
/// Lattice points whose density is provably below e^-72 of every factor's
/// peak are skipped; the budget counts the remaining points and is checked
/// before any density evaluation.
GridMoments grid_moments(const SolverInputs& in, const BoundingBox& box, const GridSpec& spec = {});

/// Default tau interval for a box: from minus the largest corner-to-AP range
/// (less the largest NLOS bias) up to zero, padded by sigma_clk.
std::pair<double, double> default_tau_range(const SolverInputs& in, const BoundingBox& box);

}  // namespace toaloc
