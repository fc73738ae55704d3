// SPDX-License-Identifier: Apache-2.0
#include "toaloc/ep_solver.hpp"

#include "toaloc/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace toaloc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Components whose log-weight trails the best by more than this are dropped.
constexpr double kWeightCutoffNats = 45.0;
// Refinements of the direction quadrature in the radial tilted moments.
constexpr int kMaxZoom = 8;

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

bool positive_definite(const Matrix& m) {
  Eigen::LLT<Matrix> llt(m);
  return llt.info() == Eigen::Success;
}

std::optional<Gaussian> moments_from_natural(const Vector& alpha, const Matrix& lambda) {
  Eigen::LLT<Matrix> llt(symmetrized(lambda));
  if (llt.info() != Eigen::Success) return std::nullopt;
  Gaussian g;
  g.covariance = symmetrized(llt.solve(Matrix::Identity(lambda.rows(), lambda.cols())));
  g.mean = llt.solve(alpha);
  if (!g.mean.allFinite() || !g.covariance.allFinite()) return std::nullopt;
  return g;
}

double site_norm(const EpSite& s) { return std::sqrt(s.alpha.squaredNorm() + s.lambda.squaredNorm()); }

double site_change(const EpSite& before, const EpSite& after, double floor) {
  const double diff = std::sqrt((after.alpha - before.alpha).squaredNorm() + (after.lambda - before.lambda).squaredNorm());
  return diff / std::max({site_norm(before), site_norm(after), floor});
}

EpSite damped(const EpSite& proposal, const EpSite& old, double damping) {
  EpSite s;
  s.alpha = damping * proposal.alpha + (1.0 - damping) * old.alpha;
  s.lambda = symmetrized(damping * proposal.lambda + (1.0 - damping) * old.lambda);
  return s;
}

/// Undamped site implied by the tilted moments against the given cavity
/// natural parameters; nullopt when the tilted covariance is singular.
std::optional<EpSite> site_from_tilted(const Gaussian& tilted, const Vector& cavity_alpha, const Matrix& cavity_lambda,
                                       bool clip_negative) {
  const auto n = tilted.covariance.rows();
  Eigen::LLT<Matrix> llt(symmetrized(tilted.covariance));
  if (llt.info() != Eigen::Success) return std::nullopt;
  const Matrix precision = symmetrized(llt.solve(Matrix::Identity(n, n)));

  EpSite s;
  s.lambda = symmetrized(precision - cavity_lambda);
  if (clip_negative) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s.lambda);
    const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
    s.lambda = symmetrized(eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose());
  }
  // Cavity times site then has its mean at the tilted mean.
  s.alpha = (cavity_lambda + s.lambda) * tilted.mean - cavity_alpha;
  if (!s.alpha.allFinite() || !s.lambda.allFinite()) return std::nullopt;
  return s;
}

// Fixed-size layout for the radial quadrature: spatial axes in 0..2 (zero
// padded in 2D), tau in slot 3.
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
constexpr int kTau = 3;

struct Direction {
  Eigen::Vector3d w;
  double log_measure;
};

/// Midpoint quadrature over unit directions within `half` radians of
/// `centre` (the whole circle/sphere when half >= pi).
void direction_rule(int d, const Eigen::Vector3d& centre, double half, double& spacing, std::vector<Direction>& out) {
  const bool full = half >= std::numbers::pi;
  if (full) half = std::numbers::pi;
  out.clear();

  if (d == 2) {
    const int n = full ? 256 : 32;
    const double theta0 = std::atan2(centre[1], centre[0]);
    const double h = 2.0 * half / n;
    const double log_h = std::log(h);
    spacing = h;
    for (int i = 0; i < n; ++i) {
      const double t = theta0 - half + (i + 0.5) * h;
      out.push_back({Eigen::Vector3d(std::cos(t), std::sin(t), 0.0), log_h});
    }
    return;
  }

  // D = 3: azimuth/elevation in a frame whose first axis is the centre.
  const Eigen::Vector3d e1 = centre.normalized();
  Eigen::Vector3d e2 = std::abs(e1.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  e2 = (e2 - e1 * e1.dot(e2)).normalized();
  const Eigen::Vector3d e3 = e1.cross(e2);

  const int na = full ? 64 : 24;
  const int nb = full ? 32 : 24;
  const double el_half = std::min(half, std::numbers::pi / 2.0);
  const double ha = 2.0 * half / na;
  const double hb = 2.0 * el_half / nb;
  spacing = std::max(ha, hb);
  for (int i = 0; i < na; ++i) {
    const double az = -half + (i + 0.5) * ha;
    const Eigen::Vector3d horiz = std::cos(az) * e1 + std::sin(az) * e2;
    for (int j = 0; j < nb; ++j) {
      const double el = -el_half + (j + 0.5) * hb;
      out.push_back({std::cos(el) * horiz + std::sin(el) * e3, std::log(ha * hb * std::cos(el))});
    }
  }
}

void check_measurement(const Gaussian& cav, const RangeMeasurement& meas) {
  if (meas.anchor.size() != cav.mean.size() - 1)
    throw invalid_argument("tilted_moments: AP and state dimensions differ");
}

[[noreturn]] void incompatible() {
  throw runtime_error("observation incompatible with cavity: all component weights underflow");
}

}  // namespace

std::string_view to_string(WeightMode mode) { return mode == WeightMode::paper ? "paper" : "corrected"; }

std::optional<WeightMode> parse_weight_mode(std::string_view text) {
  if (text == "corrected") return WeightMode::corrected;
  if (text == "paper") return WeightMode::paper;
  return std::nullopt;
}

std::string_view to_string(TiltedMethod method) { return method == TiltedMethod::linearized ? "linearized" : "radial"; }

std::optional<TiltedMethod> parse_tilted_method(std::string_view text) {
  if (text == "radial") return TiltedMethod::radial;
  if (text == "linearized") return TiltedMethod::linearized;
  return std::nullopt;
}

Vector EpState::total_alpha() const {
  Vector sum = Vector::Zero(dim);
  for (const EpSite& s : sites) sum += s.alpha;
  return sum;
}

Matrix EpState::total_lambda() const {
  Matrix sum = Matrix::Zero(dim, dim);
  for (const EpSite& s : sites) sum += s.lambda;
  return sum;
}

EpState init_ep(const SolverInputs& in, const BoundingBox& box, const EpInitOptions& options) {
  const int d = box.dimension();
  const std::size_t n = in.epoch.observations.size();
  if (n == 0) throw invalid_argument("init_ep: epoch has no observations");

  const AccessPoint* ref = nullptr;
  for (const AccessPoint& ap : in.aps)
    if (ap.id == in.epoch.reference_ap) ref = &ap;
  if (ref == nullptr) ref = &in.aps.front();
  if (ref->position.dimension() != d) throw invalid_argument("init_ep: box and AP dimensions differ");

  Vector mean(d + 1);
  mean.head(d) = box.center();
  mean[d] = -(box.center() - ref->position.coords).norm();

  Vector variance(d + 1);
  const Vector extent = box.extent();
  for (int k = 0; k < d; ++k) variance[k] = options.spatial_variance.value_or(std::pow(extent[k] / 4.0, 2));
  variance[d] = options.tau_variance.value_or(100.0 * in.sigma_clk * in.sigma_clk + variance.head(d).sum());
  if (!(variance.array() > 0.0).all()) throw invalid_argument("init_ep: initial variances must be positive");

  const Matrix precision = variance.cwiseInverse().asDiagonal();
  const double share = 1.0 / static_cast<double>(n);

  EpState state;
  state.dim = d + 1;
  state.sites.assign(n, EpSite{share * (precision * mean), share * precision});
  return state;
}

Gaussian global_moments(const EpState& state) {
  auto g = moments_from_natural(state.total_alpha(), state.total_lambda());
  if (!g) throw runtime_error("degenerate EP state: summed site precision is not positive definite");
  return *g;
}

std::optional<Gaussian> cavity(const EpState& state, std::size_t m) {
  if (m >= state.sites.size()) throw invalid_argument("cavity: site index out of range");
  if (state.sites.size() < 2) return std::nullopt;
  Vector alpha = Vector::Zero(state.dim);
  Matrix lambda = Matrix::Zero(state.dim, state.dim);
  for (std::size_t j = 0; j < state.sites.size(); ++j) {
    if (j == m) continue;
    alpha += state.sites[j].alpha;
    lambda += state.sites[j].lambda;
  }
  return moments_from_natural(alpha, lambda);
}

TiltedMoments tilted_moments(const Gaussian& cav, const RangeMeasurement& meas, const NlosPrior& prior, double sigma,
                             WeightMode mode) {
  check_measurement(cav, meas);
  const int zdim = static_cast<int>(cav.mean.size());
  const int d = zdim - 1;

  Vector x0 = cav.mean.head(d);
  Vector offset = x0 - meas.anchor;
  double d0 = offset.norm();
  if (!(d0 > 0.0)) {
    // The range gradient is undefined on top of the AP.
    x0[0] += sigma / 100.0;
    offset = x0 - meas.anchor;
    d0 = offset.norm();
  }

  Vector a(zdim);
  a.head(d) = offset / d0;
  a[d] = 1.0;

  const Matrix& C = cav.covariance;
  const Vector Ca = C * a;
  const double s = a.dot(Ca) + sigma * sigma;
  const Vector gain = Ca / s;
  const Vector gain_x = gain.head(d);

  // Residual of component l at the cavity mean is r0 - b_l.
  const double r0 = meas.toa - meas.delay - cav.mean[d] - (d0 + a.head(d).dot(cav.mean.head(d) - x0));
  const double log_evidence_norm = -0.5 * std::log(2.0 * std::numbers::pi * s);

  auto masses = prior.masses();
  std::vector<double> log_w(masses.size(), kNegInf);
  double best = kNegInf;
  for (std::size_t l = 0; l < masses.size(); ++l) {
    if (!(masses[l] > 0.0)) continue;
    const double r = r0 - prior.bias_value(l);
    const double range_l = (cav.mean.head(d) + gain_x * r - meas.anchor).norm();
    double lw = std::log(masses[l]) - std::log(range_l + sigma);
    if (mode == WeightMode::corrected) lw += log_evidence_norm - 0.5 * r * r / s;
    log_w[l] = lw;
    best = std::max(best, lw);
  }
  if (!std::isfinite(best)) incompatible();

  double total = 0.0;
  double sum_r = 0.0;
  double sum_rr = 0.0;
  double sum_b = 0.0;
  ComponentStats stats;
  stats.weights.assign(masses.size(), 0.0);
  for (std::size_t l = 0; l < masses.size(); ++l) {
    if (log_w[l] == kNegInf || log_w[l] < best - kWeightCutoffNats) continue;
    const double w = std::exp(log_w[l] - best);
    const double r = r0 - prior.bias_value(l);
    stats.weights[l] = w;
    total += w;
    sum_r += w * r;
    sum_rr += w * r * r;
    sum_b += w * prior.bias_value(l);
    ++stats.components_used;
  }
  if (!(total > 0.0) || !std::isfinite(total)) incompatible();
  for (double& w : stats.weights) w /= total;

  stats.mean_residual = sum_r / total;
  stats.residual_variance = std::max(0.0, sum_rr / total - stats.mean_residual * stats.mean_residual);
  stats.expected_bias = sum_b / total;

  // Every component shares the conditioned covariance; the means differ only
  // along the gain direction, so the between-component spread is rank one.
  TiltedMoments out;
  out.moments.mean = cav.mean + gain * stats.mean_residual;
  out.moments.covariance =
      symmetrized(C - s * gain * gain.transpose() + stats.residual_variance * gain * gain.transpose());
  out.stats = std::move(stats);
  return out;
}

TiltedMoments radial_tilted_moments(const Gaussian& cav, const RangeMeasurement& meas, const NlosPrior& prior,
                                    double sigma) {
  check_measurement(cav, meas);
  const int zdim = static_cast<int>(cav.mean.size());
  const int d = zdim - 1;
  if (d != 2 && d != 3) throw invalid_argument("radial_tilted_moments: dimension must be 2 or 3");

  Eigen::LLT<Matrix> llt(symmetrized(cav.covariance));
  if (llt.info() != Eigen::Success) return tilted_moments(cav, meas, prior, sigma, WeightMode::corrected);
  const Matrix P_dyn = llt.solve(Matrix::Identity(zdim, zdim));

  // Padded copies: slot k < d is axis k, slot kTau is tau.
  auto slot = [d](int k) { return k < d ? k : kTau; };
  Mat4 P = Mat4::Zero();
  Vec4 e = Vec4::Zero();
  Vec4 origin = Vec4::Zero();
  Vec4 mean4 = Vec4::Zero();
  for (int i = 0; i < zdim; ++i) {
    mean4[slot(i)] = cav.mean[i];
    if (i < d) origin[i] = meas.anchor[i];
    for (int j = 0; j < zdim; ++j) P(slot(i), slot(j)) = P_dyn(i, j);
  }
  e = mean4 - origin;
  const Vec4 Pe = P * e;
  const double ePe = e.dot(Pe);
  const double target = meas.toa - meas.delay;
  const double var = sigma * sigma;

  auto masses = prior.masses();
  const long last = static_cast<long>(masses.size()) - 1;
  std::vector<double> log_pi(masses.size(), kNegInf);
  double log_pi_max = kNegInf;
  double log_pi_min = 0.0;
  for (std::size_t l = 0; l < masses.size(); ++l) {
    if (!(masses[l] > 0.0)) continue;
    log_pi[l] = std::log(masses[l]);
    log_pi_max = std::max(log_pi_max, log_pi[l]);
    log_pi_min = std::min(log_pi_min, log_pi[l]);
  }
  const double reach_nats = kWeightCutoffNats + log_pi_max - log_pi_min + 1.0;

  struct Ray {
    double log_mass;
    Eigen::Vector3d w;
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
    std::size_t comp_begin, comp_end;
  };
  std::vector<Ray> rays;
  std::vector<std::pair<long, double>> comps;  // (l, weight within ray)
  std::vector<Direction> dirs;

  // Start from the cavity's angular footprint and zoom in while the tilted
  // mass is concentrated on too few rays to resolve its spread.
  const Eigen::Vector3d offset = (mean4 - origin).head<3>();
  const double d0 = offset.norm();
  const double spread =
      std::sqrt(std::max(0.0, Eigen::SelfAdjointEigenSolver<Matrix>(cav.covariance.topLeftCorner(d, d)).eigenvalues().maxCoeff()));
  Eigen::Vector3d centre = d0 > 0.0 ? Eigen::Vector3d(offset / d0) : Eigen::Vector3d::UnitX();
  double half = d0 > 6.0 * spread ? 6.0 * spread / d0 : std::numbers::pi;

  for (int pass = 0; pass < kMaxZoom; ++pass) {
    double spacing = 0.0;
    direction_rule(d, centre, half, spacing, dirs);
    rays.clear();
    comps.clear();
    for (const Direction& dir : dirs) {
      const Vec4 pw = P.leftCols<3>() * dir.w;
      Eigen::Matrix2d A;
      A(0, 0) = dir.w.dot(pw.head<3>());
      A(0, 1) = A(1, 0) = pw[kTau];
      A(1, 1) = P(kTau, kTau);
      const Eigen::Vector2d b(dir.w.dot(Pe.head<3>()), Pe[kTau]);
      const double det = A.determinant();
      if (!(det > 0.0)) continue;
      const Eigen::Matrix2d S = A.inverse();
      const Eigen::Vector2d mu = S * b;
      const double log_ray = dir.log_measure - 0.5 * (ePe - b.dot(mu)) - 0.5 * std::log(det);

      // Observation rho + tau = target - bias with noise variance sigma^2.
      const Eigen::Vector2d Sh = S * Eigen::Vector2d::Ones();
      const double s = Sh.sum() + var;
      const Eigen::Vector2d gain = Sh / s;
      const double base = target - mu.sum();
      const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * s);

      // Only bias values within reach of the ray's residual can matter.
      const double reach = std::sqrt(2.0 * s * reach_nats);
      const long lo = std::clamp(static_cast<long>(std::floor((base - reach) / prior.spacing())), 0L, last);
      const long hi = std::clamp(static_cast<long>(std::ceil((base + reach) / prior.spacing())), 0L, last);

      const std::size_t begin = comps.size();
      double best = kNegInf;
      for (long l = lo; l <= hi; ++l) {
        if (log_pi[l] == kNegInf) continue;
        const double innov = base - prior.bias_value(l);
        const double rho = mu[0] + gain[0] * innov;
        if (!(rho > 0.0)) continue;
        const double lw = log_ray + log_pi[l] + log_norm - 0.5 * innov * innov / s + (d - 1) * std::log(rho) -
                          std::log(rho + sigma);
        comps.emplace_back(l, lw);
        best = std::max(best, lw);
      }
      if (comps.size() == begin) continue;

      double total = 0.0;
      double sum_i = 0.0;
      double sum_ii = 0.0;
      for (std::size_t c = begin; c < comps.size(); ++c) {
        const double w = std::exp(comps[c].second - best);
        const double innov = base - prior.bias_value(comps[c].first);
        total += w;
        sum_i += w * innov;
        sum_ii += w * innov * innov;
        comps[c].second = w;
      }
      for (std::size_t c = begin; c < comps.size(); ++c) comps[c].second /= total;
      const double mean_innov = sum_i / total;
      const double var_innov = std::max(0.0, sum_ii / total - mean_innov * mean_innov);

      // Joseph form keeps the conditioned covariance PSD for tiny sigma.
      const Eigen::Matrix2d J = Eigen::Matrix2d::Identity() - gain * Eigen::RowVector2d::Ones();
      rays.push_back({best + std::log(total), dir.w, mu + gain * mean_innov,
                      J * S * J.transpose() + (var + var_innov) * gain * gain.transpose(), begin, comps.size()});
    }

    if (rays.empty()) break;

    double top_mass = kNegInf;
    for (const Ray& r : rays) top_mass = std::max(top_mass, r.log_mass);
    double wsum = 0.0;
    Eigen::Vector3d wmean = Eigen::Vector3d::Zero();
    for (const Ray& r : rays) {
      const double w = std::exp(r.log_mass - top_mass);
      wsum += w;
      wmean += w * (r.w - centre);
    }
    wmean /= wsum;
    double spread2 = 0.0;
    for (const Ray& r : rays) spread2 += std::exp(r.log_mass - top_mass) * (r.w - centre - wmean).squaredNorm();
    const double angular_sd = std::sqrt(spread2 / wsum / (d - 1));
    wmean += centre;
    if (angular_sd >= spacing || spacing < 1e-12 || !(wmean.norm() > 0.0)) break;
    centre = wmean.normalized();
    half = std::max(6.0 * angular_sd, 3.0 * spacing);
  }

  // Every ray puts the AP behind the device; the linear form still applies.
  if (rays.empty()) return tilted_moments(cav, meas, prior, sigma, WeightMode::corrected);

  double top = kNegInf;
  for (const Ray& r : rays) top = std::max(top, r.log_mass);

  // Moments accumulated relative to the cavity mean.
  double total = 0.0;
  Vec4 m1 = Vec4::Zero();
  Mat4 m2 = Mat4::Zero();
  ComponentStats stats;
  stats.weights.assign(masses.size(), 0.0);
  Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
  B(kTau, 1) = 1.0;
  for (const Ray& r : rays) {
    if (r.log_mass < top - kWeightCutoffNats) continue;
    const double w = std::exp(r.log_mass - top);
    B.col(0).head<3>() = r.w;
    const Vec4 dz = origin + B * r.mean - mean4;
    total += w;
    m1 += w * dz;
    m2 += w * (B * r.cov * B.transpose() + dz * dz.transpose());
    for (std::size_t c = r.comp_begin; c < r.comp_end; ++c) stats.weights[comps[c].first] += w * comps[c].second;
  }
  if (!(total > 0.0) || !std::isfinite(total)) incompatible();
  for (std::size_t l = 0; l < stats.weights.size(); ++l) {
    stats.weights[l] /= total;
    if (stats.weights[l] > 0.0) {
      ++stats.components_used;
      stats.expected_bias += stats.weights[l] * prior.bias_value(l);
    }
  }
  m1 /= total;
  const Mat4 cov4 = m2 / total - m1 * m1.transpose();

  TiltedMoments out;
  out.moments.mean.resize(zdim);
  out.moments.covariance.resize(zdim, zdim);
  for (int i = 0; i < zdim; ++i) {
    out.moments.mean[i] = cav.mean[i] + m1[slot(i)];
    for (int j = 0; j < zdim; ++j) out.moments.covariance(i, j) = cov4(slot(i), slot(j));
  }
  out.moments.covariance = symmetrized(out.moments.covariance);
  out.stats = std::move(stats);
  return out;
}

bool update_site(EpState& state, std::size_t m, const Gaussian& tilted, double damping, bool clip_negative) {
  if (m >= state.sites.size()) throw invalid_argument("update_site: site index out of range");
  if (!(damping >= 0.0 && damping <= 1.0)) throw invalid_argument("update_site: damping must lie in [0, 1]");

  const EpSite& old = state.sites[m];
  const Vector cavity_alpha = state.total_alpha() - old.alpha;
  const Matrix cavity_lambda = state.total_lambda() - old.lambda;
  auto proposal = site_from_tilted(tilted, cavity_alpha, cavity_lambda, clip_negative);
  if (!proposal) return false;

  EpSite next = damped(*proposal, old, damping);
  if (!positive_definite(symmetrized(cavity_lambda + next.lambda))) return false;
  state.sites[m] = std::move(next);
  return true;
}

PositionEstimate run_ep(const SolverInputs& in, const BoundingBox& box, const EpConfig& config) {
  if (config.max_iters < 1) throw invalid_argument("run_ep: max_iters must be >= 1");
  if (!(config.tol > 0.0)) throw invalid_argument("run_ep: tol must be positive");
  if (!(config.damping > 0.0 && config.damping <= 1.0)) throw invalid_argument("run_ep: damping must lie in (0, 1]");
  if (!(in.sigma_clk > 0.0)) throw invalid_argument("run_ep: sigma_clk must be positive");
  if (config.weight_mode == WeightMode::paper && config.tilted == TiltedMethod::radial)
    throw invalid_argument("run_ep: paper weight mode requires linearized tilted moments");

  const std::vector<RangeMeasurement> meas = resolve_measurements(in);
  EpState state = init_ep(in, box, config.init);
  const std::size_t n = state.sites.size();

  // A site whose observation the cavity cannot explain is left as is.
  auto tilted = [&](const Gaussian& cav, std::size_t m) -> std::optional<TiltedMoments> {
    try {
      return config.tilted == TiltedMethod::radial
                 ? radial_tilted_moments(cav, meas[m], in.prior, in.sigma_clk)
                 : tilted_moments(cav, meas[m], in.prior, in.sigma_clk, config.weight_mode);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::runtime) throw;
      return std::nullopt;
    }
  };

  PositionEstimate est;
  for (int iter = 1; iter <= config.max_iters; ++iter) {
    const EpState before = state;
    std::size_t accepted = 0;
    const double floor = 1e-9 * std::sqrt(before.total_alpha().squaredNorm() + before.total_lambda().squaredNorm());

    if (config.parallel) {
      const Vector alpha_total = before.total_alpha();
      const Matrix lambda_total = before.total_lambda();
      std::vector<std::optional<EpSite>> proposals(n);
      for (std::size_t m = 0; m < n; ++m) {
        auto cav = cavity(before, m);
        if (!cav) {
          ++est.skipped_sites;
          continue;
        }
        auto t = tilted(*cav, m);
        if (!t) {
          ++est.rejected_updates;
          continue;
        }
        auto site = site_from_tilted(t->moments, alpha_total - before.sites[m].alpha,
                                     lambda_total - before.sites[m].lambda, config.clip_negative_precision);
        if (!site) {
          ++est.rejected_updates;
          continue;
        }
        proposals[m] = damped(*site, before.sites[m], config.damping);
      }
      // Applied as one batch; a proposal that would break positive
      // definiteness of the running total is dropped.
      Matrix running = lambda_total;
      for (std::size_t m = 0; m < n; ++m) {
        if (!proposals[m]) continue;
        const Matrix candidate = symmetrized(running - state.sites[m].lambda + proposals[m]->lambda);
        if (!positive_definite(candidate)) {
          ++est.rejected_updates;
          continue;
        }
        running = candidate;
        state.sites[m] = std::move(*proposals[m]);
        ++accepted;
      }
    } else {
      for (std::size_t m = 0; m < n; ++m) {
        auto cav = cavity(state, m);
        if (!cav) {
          ++est.skipped_sites;
          continue;
        }
        auto t = tilted(*cav, m);
        if (t && update_site(state, m, t->moments, config.damping, config.clip_negative_precision))
          ++accepted;
        else
          ++est.rejected_updates;
      }
    }

    if (accepted == 0) throw runtime_error("degenerate EP state: no site could be updated");

    double delta = 0.0;
    for (std::size_t m = 0; m < n; ++m) delta = std::max(delta, site_change(before.sites[m], state.sites[m], floor));
    est.iterations = iter;
    est.max_site_delta = delta;
    if (delta < config.tol) {
      est.converged = true;
      break;
    }
  }

  const Gaussian g = global_moments(state);
  est.mean = g.mean;
  est.covariance = g.covariance;
  return est;
}

}  // namespace toaloc
