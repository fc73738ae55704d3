// SPDX-License-Identifier: Apache-2.0
#include "toaloc/error.hpp"
#include "toaloc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace toaloc {

namespace {

// Stream labels for make_rng; fixed so runs replay across versions.
constexpr std::uint64_t kApErrorStream = 1;
constexpr std::uint64_t kTrainingStream = 2;
constexpr std::uint64_t kEpochStream = 3;
constexpr std::uint64_t kFrozenStream = 4;

Scenario resolve_scenario(const ExperimentConfig& cfg) {
  if (const auto* g = std::get_if<GeneratorSpec>(&cfg.scenario)) return generate_scenario(*g, cfg.seed);
  return std::get<Scenario>(cfg.scenario);
}

std::map<int, double> delays_of(const ExperimentResult& r) {
  return r.calibration ? r.calibration->delays() : std::map<int, double>{};
}

struct Solved {
  EstimateRow row;
  PositionEstimate estimate;  // for tracking
};

Solved solve_one(const ExperimentConfig& cfg, const ExperimentResult& r, const ToaEpoch& epoch, SolverKind kind,
                 const std::map<int, double>& delays, const NlosPrior& prior) {
  Solved out;
  out.row.epoch_id = epoch.epoch_id;
  out.row.solver = kind;
  const int d = r.scenario.dimension;

  if (kind == SolverKind::ep) {
    SolverInputs in(epoch, r.scenario.aps, prior, cfg.solver.sigma_clk);
    in.cal_delays = delays;
    out.estimate = run_ep(in, r.scenario.bounding_box, cfg.solver.ep);
    out.row.position = out.estimate.position();
    out.row.tau = out.estimate.tau();
    out.row.covariance = out.estimate.covariance;
    out.row.iterations = out.estimate.iterations;
    out.row.converged = out.estimate.converged;
    return out;
  }

  BaselineResult b;
  if (kind == SolverKind::linear) {
    b = solve_linear(epoch, r.scenario.aps, delays);
  } else {
    NonlinearOptions opt = cfg.solver.nonlinear;
    opt.fallback_box = r.scenario.bounding_box;
    b = solve_nonlinear(epoch, r.scenario.aps, delays, opt);
  }
  out.row.position = b.position;
  out.row.tau = b.tau;
  out.row.iterations = b.iterations;
  out.row.converged = b.status == BaselineStatus::ok;
  out.estimate = position_fix(b.position, cfg.tracking && cfg.tracking->fixed_r ? *cfg.tracking->fixed_r : 1.0);
  out.estimate.mean[d] = b.tau;
  return out;
}

void simulate_stage(const ExperimentConfig& cfg, ExperimentResult& r) {
  r.scenario = resolve_scenario(cfg);
  if (const auto problems = validate_scenario(r.scenario); !problems.empty())
    throw config_error("scenario: " + problems.front());
  for (const auto& [id, bias] : cfg.error_model.fixed_bias)
    if (r.scenario.find_ap(id) == nullptr)
      throw config_error("error_model.fixed_bias." + std::to_string(id) + ": no AP with this id");

  // Scenario-given ground truth stands unless the model asks for random draws.
  if (cfg.error_model.sigma_dT > 0.0 || cfg.error_model.sigma_dx > 0.0) {
    Rng rng = make_rng(cfg.seed, {kApErrorStream});
    realize_ap_errors(r.scenario.aps, cfg.error_model, rng);
  }

  if (cfg.calibration) {
    const CalibrationSettings& c = *cfg.calibration;
    if (c.known_position.dimension() != r.scenario.dimension)
      throw config_error("calibration.known_position: dimension differs from the scenario");
    Scenario site = r.scenario;
    site.device_positions = {c.known_position};
    ErrorModel model = cfg.error_model;
    if (c.line_of_sight) {
      model.nlos.reset();
      model.fixed_bias.clear();
    }
    if (c.sigma_clk) model.sigma_clk = *c.sigma_clk;
    for (int i = 0; i < c.train_epochs; ++i) {
      Rng rng = make_rng(cfg.seed, {kTrainingStream, static_cast<std::uint64_t>(i)});
      r.training_epochs.push_back(simulate_epoch(site, 0, model, rng, nullptr, i));
    }
  }

  const FrozenNlos frozen(make_rng(cfg.seed, {kFrozenStream})());
  const std::size_t n_dev = r.scenario.device_positions.size();
  for (std::size_t i = 0; i < n_dev; ++i) {
    for (int k = 0; k < cfg.epochs_per_position; ++k) {
      const int id = static_cast<int>(i) * cfg.epochs_per_position + k;
      Rng rng = make_rng(cfg.seed, {kEpochStream, static_cast<std::uint64_t>(id)});
      r.epochs.push_back(simulate_epoch(r.scenario, i, cfg.error_model, rng, &frozen, id));
      r.device_of.push_back(i);
    }
  }
}

void calibrate_stage(const ExperimentConfig& cfg, ExperimentResult& r) {
  if (!cfg.calibration) return;
  r.calibration = estimate_calibration(r.training_epochs, r.scenario.aps, cfg.calibration->known_position,
                                       cfg.calibration->min_obs, cfg.calibration->estimator);
}

std::vector<std::vector<Solved>> solve_stage(const ExperimentConfig& cfg, ExperimentResult& r) {
  const std::size_t min_heard =
      cfg.min_heard > 0 ? static_cast<std::size_t>(cfg.min_heard) : static_cast<std::size_t>(r.scenario.dimension) + 2;
  const std::map<int, double> delays = delays_of(r);
  const NlosPrior prior = cfg.solver.prior();

  std::vector<std::size_t> work;
  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    if (r.epochs[e].heard_count() < min_heard) {
      r.skipped_epochs.push_back(r.epochs[e].epoch_id);
    } else {
      work.push_back(e);
    }
  }

  std::vector<std::vector<Solved>> solved(r.epochs.size());
  std::vector<std::exception_ptr> failure(r.epochs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t w = next++; w < work.size(); w = next++) {
      const std::size_t e = work[w];
      const ToaEpoch& epoch = r.epochs[e];
      for (SolverKind kind : cfg.solvers) {
        try {
          solved[e].push_back(solve_one(cfg, r, epoch, kind, delays, prior));
        } catch (const Error& err) {
          failure[e] = std::make_exception_ptr(Error(err.kind(), "epoch " + std::to_string(epoch.epoch_id) + ", solver " +
                                                                     std::string(to_string(kind)) + ": " + err.what()));
          break;
        } catch (const std::exception& err) {
          failure[e] = std::make_exception_ptr(runtime_error("epoch " + std::to_string(epoch.epoch_id) + ", solver " +
                                                             std::string(to_string(kind)) + ": " + err.what()));
          break;
        }
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(work.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  // The first failing epoch in epoch order wins, whatever the completion order.
  for (const std::exception_ptr& f : failure)
    if (f) std::rethrow_exception(f);

  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    const Point& truth = r.scenario.device_positions[r.device_of[e]];
    for (const Solved& s : solved[e]) {
      r.estimates.push_back(s.row);
      ErrorRecord rec;
      rec.epoch_id = s.row.epoch_id;
      rec.solver = std::string(to_string(s.row.solver));
      rec.error_meters = distance(s.row.position, truth);
      rec.heard = static_cast<int>(r.epochs[e].heard_count());
      rec.iterations = s.row.iterations;
      rec.converged = s.row.converged;
      if (!std::isfinite(rec.error_meters))
        throw runtime_error("epoch " + std::to_string(rec.epoch_id) + ", solver " + rec.solver + ": non-finite estimate");
      r.records.push_back(std::move(rec));
    }
  }
  return solved;
}

void track_stage(const ExperimentConfig& cfg, ExperimentResult& r, const std::vector<std::vector<Solved>>& solved) {
  if (!cfg.tracking) throw config_error("tracking: block required for the track stage");
  const TrackingSettings& t = *cfg.tracking;
  if (std::find(cfg.solvers.begin(), cfg.solvers.end(), t.solver) == cfg.solvers.end())
    throw config_error("tracking.solver: '" + std::string(to_string(t.solver)) + "' is not among the selected solvers");

  std::optional<TrackState> state;
  auto row_of = [](const TrackState& s, bool updated, double nis) {
    TrackRow row;
    row.epoch_time = s.epoch_time;
    row.mean = s.mean;
    row.variance = s.covariance.diagonal();
    row.updated = updated;
    row.nis = nis;
    return row;
  };

  for (std::size_t e = 0; e < r.epochs.size(); ++e) {
    const double time = static_cast<double>(e) * t.dt;
    const Solved* fix = nullptr;
    for (const Solved& s : solved[e])
      if (s.row.solver == t.solver) fix = &s;

    if (!state) {
      if (fix == nullptr) continue;
      PositionEstimate first = fix->estimate;
      if (t.fixed_r) first = position_fix(fix->row.position, *t.fixed_r);
      state = kf_init(first, time, t.v_var);
      r.track.push_back(row_of(*state, true, 0.0));
      continue;
    }
    const double dt = time - state->epoch_time;
    if (fix == nullptr) {
      state = kf_predict(*state, dt, t.q);
      r.track.push_back(row_of(*state, false, 0.0));
    } else {
      const KalmanUpdate u = kf_update(*state, dt, fix->estimate, t.q, t.fixed_r);
      state = u.state;
      r.track.push_back(row_of(*state, true, u.nis));
    }
  }
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw runtime_error("cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace

ExperimentResult run_stages(const ExperimentConfig& cfg, Stage stage) {
  ExperimentResult r;
  simulate_stage(cfg, r);
  if (stage == Stage::simulate) return r;
  calibrate_stage(cfg, r);
  if (stage == Stage::calibrate) {
    if (!cfg.calibration) throw config_error("calibration: block required for the calibrate stage");
    return r;
  }
  const auto solved = solve_stage(cfg, r);
  if (stage == Stage::track) track_stage(cfg, r, solved);
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult r = run_stages(cfg, cfg.tracking ? Stage::track : Stage::solve);
  write_artifacts(r, cfg, cfg.output_dir);
  return r;
}

void write_artifacts(const ExperimentResult& r, const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
  const int d = r.scenario.dimension;
  const char* const axes[] = {"x", "y", "z"};

  write_file(dir / "scenario.json", scenario_to_json(r.scenario));
  if (!r.epochs.empty()) {
    write_file(dir / "epochs.csv", epochs_to_csv(r.epochs));
    std::ostringstream truth;
    truth << "epoch_id,device_index";
    for (int k = 0; k < d; ++k) truth << ',' << axes[k];
    truth << ",solved\n";
    std::size_t skip = 0;
    for (std::size_t e = 0; e < r.epochs.size(); ++e) {
      const int id = r.epochs[e].epoch_id;
      const bool skipped = skip < r.skipped_epochs.size() && r.skipped_epochs[skip] == id;
      if (skipped) ++skip;
      truth << id << ',' << r.device_of[e];
      const Point& p = r.scenario.device_positions[r.device_of[e]];
      for (int k = 0; k < d; ++k) truth << ',' << format_number(p[k]);
      truth << ',' << (skipped ? 0 : 1) << '\n';
    }
    write_file(dir / "truth.csv", truth.str());
  }
  if (!r.training_epochs.empty()) write_file(dir / "training_epochs.csv", epochs_to_csv(r.training_epochs));
  if (r.calibration) write_file(dir / "calibration.json", calibration_to_json(*r.calibration));

  if (!r.estimates.empty()) {
    std::ostringstream os;
    os << "epoch_id,solver";
    for (int k = 0; k < d; ++k) os << ',' << axes[k];
    os << ",tau";
    for (int k = 0; k < d; ++k) os << ",var_" << axes[k];
    os << ",var_tau,iterations,converged\n";
    for (const EstimateRow& e : r.estimates) {
      os << e.epoch_id << ',' << to_string(e.solver);
      for (int k = 0; k < d; ++k) os << ',' << format_number(e.position[k]);
      os << ',' << format_number(e.tau);
      for (int k = 0; k <= d; ++k) os << ',' << (e.covariance.size() ? format_number(e.covariance(k, k)) : std::string());
      os << ',' << e.iterations << ',' << (e.converged ? 1 : 0) << '\n';
    }
    write_file(dir / "estimates.csv", os.str());
  }

  if (!r.records.empty()) {
    write_file(dir / "records.csv", records_to_csv(r.records));
    const auto rows = compare_report(r.records);
    write_file(dir / "report.csv", report_to_csv(rows));
    write_file(dir / "report.json", report_to_json(rows));
    std::ostringstream cdf;
    cdf << "solver,error_meters,fraction\n";
    for (SolverKind kind : cfg.solvers) {
      std::vector<double> errors;
      for (const ErrorRecord& rec : r.records)
        if (rec.solver == to_string(kind)) errors.push_back(rec.error_meters);
      if (errors.empty()) continue;
      for (const auto& [err, frac] : empirical_cdf(errors))
        cdf << to_string(kind) << ',' << format_number(err) << ',' << format_number(frac) << '\n';
    }
    write_file(dir / "cdf.csv", cdf.str());
  }
  if (!r.track.empty()) write_file(dir / "track.csv", track_to_csv(r.track, d));
}

}  // namespace toaloc
