// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
// criterion fails. Pass criterion numbers as arguments to run a subset.
#include "toaloc/toaloc.h"

#include "toaloc/ep_solver.hpp"
#include "toaloc/posterior.hpp"
#include "toaloc/simulator.hpp"
#include "toaloc/tracking.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace {

using Json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Thin RAII wrappers over the C API.

struct Experiment {
  toaloc_experiment* h = nullptr;
  std::string error;

  explicit Experiment(const Json& config) {
    if (toaloc_experiment_parse(config.dump().c_str(), nullptr, &h) != TOALOC_OK) error = toaloc_last_error();
  }
  ~Experiment() { toaloc_experiment_free(h); }
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  bool run(toaloc_stage stage, bool write = false) {
    if (!h) return false;
    if (toaloc_experiment_run(h, stage, write ? 1 : 0) != TOALOC_OK) {
      error = toaloc_last_error();
      return false;
    }
    return true;
  }

  std::vector<toaloc_record> records() const {
    size_t n = 0;
    toaloc_experiment_record_count(h, &n);
    std::vector<toaloc_record> out(n);
    for (size_t i = 0; i < n; ++i) toaloc_experiment_get_record(h, i, &out[i]);
    return out;
  }

  std::vector<double> errors(const std::string& solver) const {
    std::vector<double> out;
    for (const toaloc_record& r : records())
      if (solver == r.solver) out.push_back(r.error_meters);
    return out;
  }
};

double percentile(const std::vector<double>& v, double p) {
  double out = std::nan("");
  toaloc_percentile(v.data(), v.size(), p, &out);
  return out;
}

Json point(double x, double y) { return Json::array({x, y}); }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// 1. Noiseless exactness.

bool in_hull(const std::vector<std::array<double, 2>>& pts, double x, double y);

// APs uniform in a 100 m square at least 10 m apart; the device inside their
// convex hull and at least 5 m from every AP.
Outcome criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> ap(0.0, 100.0);
  std::uniform_real_distribution<double> dev(10.0, 90.0);
  const double sigma = 0.001;
  toaloc_prior* prior = nullptr;
  toaloc_prior_line_of_sight(sigma, &prior);

  double worst = 0.0;
  int solves = 0;
  std::string failure;
  for (int g = 0; g < 100 && failure.empty(); ++g) {
    std::array<int, 4> ids{1, 2, 3, 4};
    std::array<double, 8> pos{};
    auto separated = [&] {
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b)
          if (std::hypot(pos[2 * a] - pos[2 * b], pos[2 * a + 1] - pos[2 * b + 1]) < 10.0) return false;
      return true;
    };
    do {
      for (double& c : pos) c = ap(rng);
    } while (!separated());
    std::vector<std::array<double, 2>> corners;
    for (int j = 0; j < 4; ++j) corners.push_back({pos[2 * j], pos[2 * j + 1]});
    double x = 0.0, y = 0.0;
    auto range = [&](int j) { return std::hypot(x - pos[2 * j], y - pos[2 * j + 1]); };
    auto near_ap = [&] {
      for (int j = 0; j < 4; ++j)
        if (range(j) < 5.0) return true;
      return false;
    };
    do {
      x = dev(rng);
      y = dev(rng);
    } while (!in_hull(corners, x, y) || near_ap());
    std::array<double, 4> toa{};
    for (int j = 0; j < 4; ++j) toa[j] = range(j) - range(0);
    const double lo[2] = {0.0, 0.0}, hi[2] = {100.0, 100.0};

    toaloc_epoch_input in{2, 4, ids.data(), pos.data(), 4, ids.data(), toa.data(), 1, nullptr, lo, hi};
    for (const char* solver : {"ep", "linear", "nonlinear"}) {
      toaloc_solution sol{};
      if (toaloc_solve_epoch(solver, &in, prior, sigma, &sol) != TOALOC_OK) {
        failure = fmt("geometry %d, %s: %s", g, solver, toaloc_last_error());
        break;
      }
      const double err = std::hypot(sol.position[0] - x, sol.position[1] - y);
      if (err > 1e-3 && failure.empty()) failure = fmt("geometry %d, %s: error %.3g m", g, solver, err);
      worst = std::max(worst, err);
      ++solves;
    }
  }
  toaloc_prior_free(prior);
  const double t = seconds_since(t0);
  if (!failure.empty()) return {false, failure};
  return {worst < 1e-3 && t < 1.0, fmt("max error %.3g m over %d solves (limit 1e-3), %.2f s (limit 1 s)", worst, solves, t)};
}

// 2 and 7: random five-AP scenarios against the grid oracle.

bool in_hull(const std::vector<std::array<double, 2>>& pts, double x, double y) {
  std::vector<std::array<double, 2>> p = pts;
  std::sort(p.begin(), p.end());
  auto cross = [](const auto& o, const auto& a, const auto& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<std::array<double, 2>> h;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t start = h.size();
    for (const auto& q : p) {
      while (h.size() >= start + 2 && cross(h[h.size() - 2], h.back(), q) <= 0) h.pop_back();
      h.push_back(q);
    }
    h.pop_back();
    std::reverse(p.begin(), p.end());
  }
  for (std::size_t i = 0; i < h.size(); ++i)
    if (cross(h[i], h[(i + 1) % h.size()], std::array<double, 2>{x, y}) < 0) return false;
  return true;
}

struct OracleCase {
  toaloc::Scenario scenario;
  toaloc::ToaEpoch epoch;
};

// APs uniform in a 60 m square; the device uniform in the central 30 m square,
// redrawn until it lies inside the AP convex hull. Frozen NLOS from (5, 50).
std::vector<OracleCase> oracle_cases() {
  using namespace toaloc;
  std::vector<OracleCase> out;
  for (int sc = 0; sc < 20; ++sc) {
    Rng g = make_rng(2024, {static_cast<std::uint64_t>(sc)});
    std::uniform_real_distribution<double> U(0, 60), V(15, 45);
    Scenario s;
    s.dimension = 2;
    std::vector<std::array<double, 2>> pts;
    for (int i = 0; i < 5; ++i) {
      const double x = U(g), y = U(g);
      s.aps.push_back({i + 1, {x, y}, {}, 0.0});
      pts.push_back({x, y});
    }
    double x = 0, y = 0;
    do {
      x = V(g);
      y = V(g);
    } while (!in_hull(pts, x, y));
    s.device_positions = {{x, y}};
    s.bounding_box = BoundingBox{Vector::Zero(2), Vector::Constant(2, 60.0)};
    ErrorModel m;
    m.sigma_clk = 1;
    m.nlos = NlosPrior::build(1, 5, 50);
    m.frozen_nlos = true;
    const FrozenNlos frozen(99 + sc);
    out.push_back({s, simulate_epoch(s, 0, m, g, &frozen)});
  }
  return out;
}

Outcome criterion2(const std::vector<OracleCase>& cases) {
  using namespace toaloc;
  const auto t0 = Clock::now();
  int within = 0;
  double worst = 0.0;
  std::string misses;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const OracleCase& c = cases[i];
    SolverInputs in(c.epoch, c.scenario.aps, NlosPrior::build(1, 5, 50), 1.0);
    GridSpec spec;
    spec.step = 0.25;
    const GridMoments grid = grid_moments(in, c.scenario.bounding_box, spec);
    EpConfig cfg;
    cfg.weight_mode = WeightMode::corrected;
    const PositionEstimate ep = run_ep(in, c.scenario.bounding_box, cfg);
    const double dx = std::abs(ep.mean[0] - grid.mean[0]);
    const double dy = std::abs(ep.mean[1] - grid.mean[1]);
    worst = std::max({worst, dx, dy});
    if (dx <= 0.5 && dy <= 0.5) {
      ++within;
    } else {
      misses += fmt(" #%zu(%.3f, %.3f)", i, dx, dy);
    }
  }
  const double t = seconds_since(t0);
  return {within >= 18 && t < 300.0,
          fmt("%d/20 within 0.5 m of the grid mean (need 18), largest offset %.3f m, %.0f s (limit 300 s);", within,
              worst, t) + (misses.empty() ? std::string(" no misses") : " misses" + misses)};
}

// 3 and 4: NLOS robustness.

Json nlos_scenario(int n_aps, int n_devices) {
  // Eight APs around a 200 m square, then more on an inner ring.
  const double base[8][2] = {{0, 0}, {200, 0}, {0, 200}, {200, 200}, {100, -20}, {-20, 100}, {220, 100}, {100, 220}};
  const double extra[7][2] = {{50, 50}, {150, 50}, {50, 150}, {150, 150}, {100, 40}, {40, 100}, {160, 100}};
  Json aps = Json::array();
  for (int j = 0; j < n_aps; ++j) {
    const auto& p = j < 8 ? base[j] : extra[j - 8];
    aps.push_back({{"id", j + 1}, {"position", point(p[0], p[1])}});
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(20.0, 180.0);
  Json dev = Json::array();
  for (int i = 0; i < n_devices; ++i) {
    const double x = u(rng);
    dev.push_back(point(x, u(rng)));
  }
  return {{"dimension", 2}, {"aps", aps}, {"device_positions", dev}};
}

Json nlos_config(int n_aps, double p_hear, const char* solvers) {
  return {{"seed", 11},
          {"scenario", nlos_scenario(n_aps, 100)},
          {"error_model", {{"sigma_clk", 1.0}, {"p_hear", p_hear}, {"fixed_bias", {{"3", 150.0}}}}},
          {"solvers", solvers},
          {"solver", {{"sigma_clk", 1.0}, {"K", 40}, {"L", 1500}}}};
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  Experiment e(nlos_config(8, 1.0, "ep,nonlinear"));
  if (!e.run(TOALOC_STAGE_SOLVE)) return {false, e.error};
  const auto ep = e.errors("ep");
  const auto nl = e.errors("nonlinear");
  const double t = seconds_since(t0);
  const double ep50 = percentile(ep, 0.5), ep90 = percentile(ep, 0.9);
  const double nl50 = percentile(nl, 0.5), nl90 = percentile(nl, 0.9);
  return {ep.size() == 100 && nl.size() == 100 && ep50 < nl50 && ep90 < nl90 && t < 60.0,
          fmt("median ep %.2f m < nonlinear %.2f m, p90 ep %.2f m < nonlinear %.2f m, %zu epochs, %.1f s (limit 60 s)",
              ep50, nl50, ep90, nl90, ep.size(), t)};
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  std::vector<double> p90;
  std::string detail;
  for (int n : {5, 8, 12}) {
    // Reference always heard; each of the other 14 with probability p.
    const double p = (n - 1) / 14.0;
    Experiment e(nlos_config(15, p, "ep"));
    if (!e.run(TOALOC_STAGE_SOLVE)) return {false, e.error};
    double heard = 0.0;
    const auto recs = e.records();
    for (const auto& r : recs) heard += r.heard;
    p90.push_back(percentile(e.errors("ep"), 0.9));
    detail += fmt("N=%d: mean heard %.1f, p90 %.2f m; ", n, recs.empty() ? 0.0 : heard / recs.size(), p90.back());
  }
  const double t = seconds_since(t0);
  return {p90[0] > p90[1] && p90[1] > p90[2] && t < 120.0, detail + fmt("%.1f s (limit 120 s)", t)};
}

// 5. Calibration recovery.

Outcome criterion5() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> delay(0.0, 50.0);
  Json scenario = nlos_scenario(8, 20);
  std::map<int, double> truth;
  for (auto& ap : scenario["aps"]) {
    const int id = ap["id"];
    truth[id] = id == 1 ? 0.0 : delay(rng);
    if (id != 1) ap["true_cal_delay"] = truth[id];
  }
  // Training at sigma_clk = 20 from a surveyed spot; test epochs at 1 m.
  Json cfg = {{"seed", 5},
              {"scenario", scenario},
              {"epochs_per_position", 5},
              {"error_model", {{"sigma_clk", 1.0}}},
              {"solvers", "ep"},
              {"solver", {{"sigma_clk", 1.0}, {"K", 10}, {"L", 1000}}}};
  Experiment before(cfg);
  if (!before.run(TOALOC_STAGE_SOLVE)) return {false, before.error};
  cfg["calibration"] = {{"train_epochs", 100}, {"known_position", point(100, 100)}, {"sigma_clk", 20.0}};
  Experiment after(cfg);
  if (!after.run(TOALOC_STAGE_SOLVE)) return {false, after.error};

  const double bound = 3.0 * std::sqrt(2.0) * 20.0 / std::sqrt(100.0);
  double worst = 0.0;
  size_t n = 0;
  toaloc_experiment_calibration_count(after.h, &n);
  for (size_t i = 0; i < n; ++i) {
    toaloc_calibration_entry c{};
    toaloc_experiment_get_calibration_entry(after.h, i, &c);
    worst = std::max(worst, std::abs(c.delta_T_hat - truth[c.ap_id]));
  }
  const double pre = percentile(before.errors("ep"), 0.9);
  const double post = percentile(after.errors("ep"), 0.9);
  const double t = seconds_since(t0);
  return {n == truth.size() && worst <= bound && post <= 0.75 * pre && t < 60.0,
          fmt("worst |delay error| %.2f m (bound %.2f m) over %zu APs; p90 %.2f m -> %.2f m (%.0f%% lower, need 25%%), "
              "%.1f s (limit 60 s)",
              worst, bound, n, pre, post, 100.0 * (1.0 - post / pre), t)};
}

// 6. Prior correctness.

Outcome criterion6() {
  double worst_sum = 0.0, worst_head = 0.0;
  for (int K : {1, 5, 40}) {
    for (int L : {2, 50, 1500}) {
      toaloc_prior* p = nullptr;
      if (toaloc_prior_create(1.0, K, L, &p) != TOALOC_OK) return {false, toaloc_last_error()};
      size_t n = 0;
      toaloc_prior_size(p, &n);
      std::vector<double> m(n);
      toaloc_prior_masses(p, m.data(), n);
      toaloc_prior_free(p);
      double sum = 0.0, head = 0.0;
      for (size_t l = 0; l < n; ++l) {
        sum += m[l];
        if (l < static_cast<size_t>(K)) head += m[l];
      }
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      worst_head = std::max(worst_head, std::abs(head - 0.5));
    }
  }
  return {worst_sum <= 1e-12 && worst_head <= 1e-12,
          fmt("max |sum - 1| %.2g, max |first-K mass - 0.5| %.2g over 9 (K, L) pairs (limit 1e-12)", worst_sum, worst_head)};
}

// 7. EP structural invariants.

toaloc::Matrix random_spd(std::mt19937_64& rng, int n, double lo, double hi) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(lo, hi);
  toaloc::Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = g(rng);
  Eigen::HouseholderQR<toaloc::Matrix> qr(a);
  const toaloc::Matrix q = qr.householderQ();
  toaloc::Vector ev(n);
  for (int i = 0; i < n; ++i) ev[i] = u(rng);
  return q * ev.asDiagonal() * q.transpose();
}

toaloc::EpState random_state(std::mt19937_64& rng, int dim, int sites) {
  std::normal_distribution<double> g;
  toaloc::EpState s;
  s.dim = dim;
  for (int m = 0; m < sites; ++m) {
    toaloc::EpSite site;
    site.lambda = random_spd(rng, dim, 0.1, 10.0);
    site.alpha = toaloc::Vector(dim);
    for (int i = 0; i < dim; ++i) site.alpha[i] = 5.0 * g(rng);
    s.sites.push_back(site);
  }
  return s;
}

Outcome criterion7(const std::vector<OracleCase>& cases) {
  using namespace toaloc;
  std::mt19937_64 rng(77);

  // Multiply-back: cavity natural parameters plus the removed site give the
  // global natural parameters.
  double worst_identity = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 3 + trial % 2;
    const EpState s = random_state(rng, dim, 3 + trial % 5);
    const Matrix total_l = s.total_lambda();
    const Vector total_a = s.total_alpha();
    for (std::size_t m = 0; m < s.sites.size(); ++m) {
      const auto cav = cavity(s, m);
      if (!cav) return {false, fmt("cavity %zu of random state %d not positive definite", m, trial)};
      const Matrix cav_l = cav->covariance.inverse();
      const Vector cav_a = cav_l * cav->mean;
      const double dl = (cav_l + s.sites[m].lambda - total_l).norm() / total_l.norm();
      const double da = (cav_a + s.sites[m].alpha - total_a).norm() / std::max(1.0, total_a.norm());
      worst_identity = std::max({worst_identity, dl, da});
    }
  }

  // Randomized updates: the global covariance must stay SPD after every
  // accepted update.
  int accepted = 0, rejected = 0, broken = 0;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> g;
  EpState s = random_state(rng, 3, 4);
  for (int step = 0; step < 10000; ++step) {
    if (step % 100 == 0) s = random_state(rng, 3 + (step / 100) % 2, 3 + (step / 100) % 4);
    const std::size_t m = static_cast<std::size_t>(unit(rng) * s.sites.size()) % s.sites.size();
    const auto cav = cavity(s, m);
    if (!cav) continue;
    Gaussian tilted;
    // Tilted covariance anywhere from much tighter to somewhat wider than the cavity.
    const Matrix scale = random_spd(rng, s.dim, 0.05, 1.5);
    tilted.covariance = scale * cav->covariance * scale;
    tilted.covariance = 0.5 * (tilted.covariance + tilted.covariance.transpose());
    tilted.mean = cav->mean;
    for (int i = 0; i < s.dim; ++i) tilted.mean[i] += g(rng) * std::sqrt(cav->covariance(i, i));
    const bool clip = step % 2 == 0;
    if (update_site(s, m, tilted, 0.1 + 0.9 * unit(rng), clip)) {
      ++accepted;
      Eigen::LLT<Matrix> llt(s.total_lambda());
      bool ok = llt.info() == Eigen::Success;
      if (ok) {
        const Matrix cov = llt.solve(Matrix::Identity(s.dim, s.dim));
        Eigen::LLT<Matrix> llt_cov(0.5 * (cov + cov.transpose()));
        ok = llt_cov.info() == Eigen::Success && cov.allFinite();
      }
      if (!ok) ++broken;
    } else {
      ++rejected;
    }
  }

  // Convergence within 20 sweeps on the oracle scenarios.
  int converged = 0;
  for (const OracleCase& c : cases) {
    SolverInputs in(c.epoch, c.scenario.aps, NlosPrior::build(1, 5, 50), 1.0);
    EpConfig cfg;
    cfg.max_iters = 20;
    converged += run_ep(in, c.scenario.bounding_box, cfg).converged ? 1 : 0;
  }
  const bool pass = worst_identity <= 1e-10 && broken == 0 && accepted > 0 && converged * 10 >= 9 * static_cast<int>(cases.size());
  return {pass, fmt("multiply-back residual %.2g (limit 1e-10); %d accepted / %d rejected updates, %d non-SPD; "
                    "%d/%zu converged within 20 sweeps (need 90%%)",
                    worst_identity, accepted, rejected, broken, converged, cases.size())};
}

// 8. Kalman benefit.

Outcome criterion8() {
  using namespace toaloc;
  // Circuit: 200 epochs at 10 Hz around a 30 m circle at 10 m/s.
  const int n = 200;
  const double dt = 0.1, radius = 30.0, speed = 10.0;
  Json dev = Json::array();
  std::vector<std::array<double, 2>> truth;
  for (int i = 0; i < n; ++i) {
    const double a = speed * dt * i / radius;
    truth.push_back({60.0 + radius * std::cos(a), 40.0 + radius * std::sin(a)});
    dev.push_back(point(truth.back()[0], truth.back()[1]));
  }
  Json aps = Json::array();
  const double pos[6][2] = {{0, 0}, {120, 0}, {120, 80}, {0, 80}, {60, -10}, {60, 90}};
  for (int j = 0; j < 6; ++j) aps.push_back({{"id", j + 1}, {"position", point(pos[j][0], pos[j][1])}});
  const Json cfg = {{"seed", 8},
                    {"scenario", {{"dimension", 2}, {"aps", aps}, {"device_positions", dev}}},
                    {"error_model", {{"sigma_clk", 1.0}}},
                    {"solvers", "ep"},
                    {"solver", {{"sigma_clk", 1.0}, {"prior", "los"}}},
                    {"tracking", {{"dt", dt}, {"q", 20.0}, {"v_var", 200.0}}}};
  Experiment e(cfg);
  if (!e.run(TOALOC_STAGE_TRACK)) return {false, e.error};
  double raw = 0.0, filtered = 0.0;
  const auto recs = e.records();
  for (const auto& r : recs) raw += r.error_meters * r.error_meters;
  size_t rows = 0;
  toaloc_experiment_track_count(e.h, &rows);
  for (size_t i = 0; i < rows; ++i) {
    toaloc_track_row r{};
    toaloc_experiment_get_track_row(e.h, i, &r);
    const auto& t = truth[i];
    filtered += std::pow(r.mean[0] - t[0], 2) + std::pow(r.mean[1] - t[1], 2);
  }
  if (recs.size() != static_cast<size_t>(n) || rows != static_cast<size_t>(n))
    return {false, fmt("expected %d fixes and track rows, got %zu and %zu", n, recs.size(), rows)};
  raw = std::sqrt(raw / n);
  filtered = std::sqrt(filtered / n);

  // Matched model: white-acceleration truth, Gaussian fixes with the
  // covariance the filter is told.
  std::mt19937_64 rng(88);
  std::normal_distribution<double> g;
  const double q = 2.0;
  Matrix r_cov(2, 2);
  r_cov << 0.5, 0.1, 0.1, 0.3;
  const Eigen::LLT<Matrix> r_chol(r_cov);
  Vector x(4);
  x << 10.0, 20.0, 3.0, -1.0;
  const Matrix Q = [&] {
    Matrix m = Matrix::Zero(4, 4);
    for (int k = 0; k < 2; ++k) {
      m(k, k) = dt * dt * dt / 3.0;
      m(k, k + 2) = m(k + 2, k) = dt * dt / 2.0;
      m(k + 2, k + 2) = dt;
    }
    return Matrix(q * m);
  }();
  const Eigen::LLT<Matrix> q_chol(Q);
  auto fix = [&](const Vector& state) {
    Vector z(2);
    z << g(rng), g(rng);
    PositionEstimate est;
    est.mean = Vector::Zero(3);
    est.mean.head(2) = state.head(2) + r_chol.matrixL() * z;
    est.covariance = Matrix::Identity(3, 3);
    est.covariance.topLeftCorner(2, 2) = r_cov;
    return est;
  };
  TrackState track = kf_init(fix(x), 0.0, 0.0);
  track.mean.tail(2) = x.tail(2);
  track.covariance.bottomRightCorner(2, 2) = 1e-6 * Matrix::Identity(2, 2);
  double nis = 0.0;
  const int steps = 200;
  for (int k = 0; k < steps; ++k) {
    Vector w(4);
    for (int i = 0; i < 4; ++i) w[i] = g(rng);
    Vector next = x;
    next.head(2) += dt * x.tail(2);
    x = next + q_chol.matrixL() * w;
    const KalmanUpdate u = kf_update(track, dt, fix(x), q);
    nis += u.nis;
    track = u.state;
  }
  const boost::math::chi_squared chi(2.0 * steps);
  const double lo = boost::math::quantile(chi, 0.005);
  const double hi = boost::math::quantile(chi, 0.995);
  return {filtered < raw && nis >= lo && nis <= hi,
          fmt("filtered RMSE %.3f m < raw %.3f m; summed NIS %.1f in the 99%% band [%.1f, %.1f] for %d dof", filtered,
              raw, nis, lo, hi, 2 * steps)};
}

// 9. Determinism.

Outcome criterion9() {
  const auto base = std::filesystem::temp_directory_path() / ("toaloc_acceptance_" + std::to_string(::getpid()));
  Json cfg = {{"seed", 1234567890123ULL},
              {"scenario", {{"generator", {{"kind", "go_kart"}, {"n_positions", 14}}}}},
              {"epochs_per_position", 3},
              {"error_model", {{"sigma_clk", 1.0}, {"nlos", {{"K", 10}, {"L", 100}}}, {"sigma_dT", 5.0}, {"p_hear", 0.8}}},
              {"solvers", "ep,linear,nonlinear"},
              {"solver", {{"sigma_clk", 1.0}, {"K", 10}, {"L", 1000}}},
              {"calibration", {{"train_epochs", 30}, {"known_position", point(60, 40)}}},
              {"tracking", {{"dt", 0.1}}}};
  std::vector<std::string> texts;
  for (int run = 0; run < 3; ++run) {
    cfg["output_dir"] = (base / std::to_string(run)).string();
    cfg["threads"] = run == 2 ? 3 : 1;
    Experiment e(cfg);
    if (!e.run(TOALOC_STAGE_TRACK, true)) return {false, e.error};
    texts.push_back(read_file(base / std::to_string(run) / "records.csv"));
  }
  const std::string track0 = read_file(base / "0" / "track.csv");
  const std::string track1 = read_file(base / "1" / "track.csv");
  std::filesystem::remove_all(base);
  const bool same = !texts[0].empty() && texts[0] == texts[1] && texts[0] == texts[2] && track0 == track1;
  const auto lines = std::count(texts[0].begin(), texts[0].end(), '\n');
  return {same, fmt("records.csv (%ld lines) byte-identical across 3 runs (1 and 3 threads): %s", static_cast<long>(lines),
                    same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int c) { return wanted.empty() || wanted.count(c) > 0; };

  std::vector<OracleCase> cases;
  if (want(2) || want(7)) cases = oracle_cases();

  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, criterion1},
      {2, [&] { return criterion2(cases); }},
      {3, criterion3},
      {4, criterion4},
      {5, criterion5},
      {6, criterion6},
      {7, [&] { return criterion7(cases); }},
      {8, criterion8},
      {9, criterion9},
  };

  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!want(id)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
