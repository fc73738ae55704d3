// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/geometry.hpp"
#include "toaloc/posterior.hpp"

#include <optional>
#include <string_view>

namespace toaloc {

/// Expectation propagation over z = (x, tau) for the NLOS-mixture posterior.
///
/// The approximation is a product of Gaussian site factors, one per heard
/// AP, each exp(alpha^T z - z^T Lambda z / 2). A site is refined by removing
/// it (the cavity), multiplying the cavity by the exact mixture likelihood of
/// that AP (the tilted distribution), matching the tilted mean/covariance and
/// dividing the cavity back out.
///
/// Tilted moments come in two flavours:
///
///  radial      x = x_m + rho * w over unit directions w from the AP. Along a
///              ray the cavity is Gaussian in (rho, tau) and the likelihood
///              depends on rho + tau only, so each mixture component is an
///              exact rank-one conditioning. Directions are integrated by
///              quadrature over the cavity's angular footprint. The Jacobian
///              rho^(D-1) and the range prior 1/(rho + sigma_clk) are frozen
///              at each component's mean.
///
///  linearized  d_m(x) linearized at the cavity mean, a = (u, 1) with u the
///              unit vector from the AP to the cavity mean. The range prior
///              is frozen at each component's mean and only enters the
///              component weights.

struct Gaussian {
  Vector mean;
  Matrix covariance;
};

struct EpSite {
  Vector alpha;
  Matrix lambda;
};

struct EpState {
  int dim = 0;  // D + 1
  std::vector<EpSite> sites;

  Vector total_alpha() const;
  Matrix total_lambda() const;
};

enum class WeightMode {
  corrected,  // pi_l * Z_l / (d_l + sigma): full moment matching
  paper,      // pi_l / (d_l + sigma): component evidence omitted (linearized only)
};

enum class TiltedMethod { radial, linearized };

std::string_view to_string(WeightMode mode);
std::optional<WeightMode> parse_weight_mode(std::string_view text);
std::string_view to_string(TiltedMethod method);
std::optional<TiltedMethod> parse_tilted_method(std::string_view text);

struct EpInitOptions {
  std::optional<double> spatial_variance;  // default (box extent / 4)^2 per axis
  std::optional<double> tau_variance;      // default 100 sigma_clk^2 + sum of spatial variances
};

/// Sites split an initial diagonal Gaussian equally: mean at the box centre
/// with tau = -|centre - reference AP|. Independent of the measured ToAs.
EpState init_ep(const SolverInputs& in, const BoundingBox& box, const EpInitOptions& options = {});

/// Sigma = (sum Lambda)^-1, mu = Sigma sum alpha. Throws when the summed
/// precision is not positive definite ("degenerate EP state").
Gaussian global_moments(const EpState& state);

/// The approximation with site m removed; nullopt when its precision is not
/// positive definite (the site is then skipped for the sweep).
std::optional<Gaussian> cavity(const EpState& state, std::size_t m);

struct ComponentStats {
  std::size_t components_used = 0;  // prior grid points with non-zero weight
  double expected_bias = 0.0;       // E_w[bias]
  std::vector<double> weights;      // normalized, one per prior grid point

  // Linearized only: r_l = ToA - delay - tau - d at the cavity mean, less the bias.
  double mean_residual = 0.0;
  double residual_variance = 0.0;
};

struct TiltedMoments {
  Gaussian moments;
  ComponentStats stats;
};

/// Tilted moments with the range linearized at the cavity mean. Throws when
/// every component weight underflows.
TiltedMoments tilted_moments(const Gaussian& cavity, const RangeMeasurement& measurement, const NlosPrior& prior,
                             double sigma_clk, WeightMode mode = WeightMode::corrected);

/// Tilted moments by ray decomposition around the AP; D = 2 or 3. Falls back
/// to the linearized form when no ray admits a positive range.
TiltedMoments radial_tilted_moments(const Gaussian& cavity, const RangeMeasurement& measurement,
                                    const NlosPrior& prior, double sigma_clk);

/// Replace site m by the damped update implied by `tilted`. With
/// `clip_negative` the undamped site precision is projected onto the PSD cone
/// and alpha re-solved so the tilted mean is still reproduced. Returns false
/// (site unchanged) when the tilted covariance cannot be inverted or the
/// summed precision would lose positive definiteness.
bool update_site(EpState& state, std::size_t m, const Gaussian& tilted, double damping, bool clip_negative = true);

struct EpConfig {
  int max_iters = 50;
  double tol = 1e-4;  // relative site change
  double damping = 0.7;
  WeightMode weight_mode = WeightMode::corrected;
  TiltedMethod tilted = TiltedMethod::radial;
  bool parallel = false;  // true: every sweep reads one pre-sweep snapshot
  bool clip_negative_precision = true;
  EpInitOptions init;
};

struct PositionEstimate {
  Vector mean;  // (x, tau)
  Matrix covariance;
  int iterations = 0;
  bool converged = false;
  double max_site_delta = 0.0;
  int rejected_updates = 0;
  int skipped_sites = 0;

  int dimension() const { return static_cast<int>(mean.size()) - 1; }
  Point position() const { return Point(mean.head(dimension())); }
  double tau() const { return mean[dimension()]; }
  Matrix position_covariance() const { return covariance.topLeftCorner(dimension(), dimension()); }
};

/// Throws invalid_argument for bad settings (including WeightMode::paper with
/// radial tilted moments) and runtime_error when the state degenerates.
PositionEstimate run_ep(const SolverInputs& in, const BoundingBox& box, const EpConfig& config = {});

}  // namespace toaloc
