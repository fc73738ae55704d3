// SPDX-License-Identifier: Apache-2.0
#include "toaloc/toaloc.h"

#include "toaloc/error.hpp"
#include "toaloc/harness.hpp"

#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

struct toaloc_experiment {
  toaloc::ExperimentConfig config;
  toaloc::ExperimentResult result;
};

struct toaloc_report {
  std::vector<toaloc::ErrorRecord> records;
  std::vector<toaloc::ReportRow> rows;
};

struct toaloc_prior {
  toaloc::NlosPrior prior;
};

namespace {

thread_local std::string last_error;

toaloc_status fail(toaloc_status status, std::string message) {
  last_error = std::move(message);
  return status;
}

toaloc_status status_of(toaloc::ErrorKind kind) {
  switch (kind) {
    case toaloc::ErrorKind::invalid_argument: return TOALOC_ERR_ARGUMENT;
    case toaloc::ErrorKind::config: return TOALOC_ERR_CONFIG;
    case toaloc::ErrorKind::runtime: return TOALOC_ERR_RUNTIME;
  }
  return TOALOC_ERR_RUNTIME;
}

template <class F>
toaloc_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return TOALOC_OK;
  } catch (const toaloc::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TOALOC_ERR_RUNTIME, "out of memory");
  } catch (const std::exception& e) {
    return fail(TOALOC_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(TOALOC_ERR_RUNTIME, "unknown error");
  }
}

#define TOALOC_REQUIRE(ptr)                                                    \
  do {                                                                         \
    if ((ptr) == nullptr) return fail(TOALOC_ERR_ARGUMENT, #ptr " is NULL");   \
  } while (0)

toaloc_report* make_report(std::vector<toaloc::ErrorRecord> records) {
  auto* r = new toaloc_report{std::move(records), {}};
  r->rows = toaloc::compare_report(r->records);
  return r;
}

std::string read_text(const char* path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw toaloc::config_error(std::string("cannot open '") + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

extern "C" {

const char* toaloc_version(void) { return "0.1.0"; }

const char* toaloc_last_error(void) { return last_error.c_str(); }

toaloc_status toaloc_experiment_load(const char* config_path, toaloc_experiment** out) {
  TOALOC_REQUIRE(config_path);
  TOALOC_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new toaloc_experiment{toaloc::load_config(config_path), {}}; });
}

toaloc_status toaloc_experiment_parse(const char* config_json, const char* base_dir, toaloc_experiment** out) {
  TOALOC_REQUIRE(config_json);
  TOALOC_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    *out = new toaloc_experiment{toaloc::parse_config(config_json, base_dir ? base_dir : ""), {}};
  });
}

void toaloc_experiment_free(toaloc_experiment* exp) { delete exp; }

toaloc_status toaloc_experiment_set_seed(toaloc_experiment* exp, uint64_t seed) {
  TOALOC_REQUIRE(exp);
  exp->config.seed = seed;
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_set_output_dir(toaloc_experiment* exp, const char* dir) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(dir);
  if (*dir == '\0') return fail(TOALOC_ERR_ARGUMENT, "output directory is empty");
  exp->config.output_dir = dir;
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_set_solvers(toaloc_experiment* exp, const char* solvers) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(solvers);
  return guarded([&] {
    auto list = toaloc::parse_solver_list(solvers);
    if (exp->config.tracking &&
        std::find(list.begin(), list.end(), exp->config.tracking->solver) == list.end())
      throw toaloc::config_error("solvers: tracking.solver '" +
                                 std::string(toaloc::to_string(exp->config.tracking->solver)) + "' must stay selected");
    exp->config.solvers = std::move(list);
  });
}

toaloc_status toaloc_experiment_run(toaloc_experiment* exp, toaloc_stage stage, int write_artifacts) {
  TOALOC_REQUIRE(exp);
  toaloc::Stage s;
  switch (stage) {
    case TOALOC_STAGE_SIMULATE: s = toaloc::Stage::simulate; break;
    case TOALOC_STAGE_CALIBRATE: s = toaloc::Stage::calibrate; break;
    case TOALOC_STAGE_SOLVE: s = toaloc::Stage::solve; break;
    case TOALOC_STAGE_TRACK: s = toaloc::Stage::track; break;
    default: return fail(TOALOC_ERR_ARGUMENT, "unknown stage " + std::to_string(static_cast<int>(stage)));
  }
  return guarded([&] {
    exp->result = {};
    exp->result = toaloc::run_stages(exp->config, s);
    if (write_artifacts) toaloc::write_artifacts(exp->result, exp->config, exp->config.output_dir);
  });
}

toaloc_status toaloc_experiment_epoch_count(const toaloc_experiment* exp, size_t* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = exp->result.epochs.size();
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_skipped_count(const toaloc_experiment* exp, size_t* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = exp->result.skipped_epochs.size();
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_record_count(const toaloc_experiment* exp, size_t* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = exp->result.records.size();
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_get_record(const toaloc_experiment* exp, size_t index, toaloc_record* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  if (index >= exp->result.records.size()) return fail(TOALOC_ERR_ARGUMENT, "record index out of range");
  const toaloc::ErrorRecord& r = exp->result.records[index];
  *out = {r.epoch_id, r.solver.c_str(), r.error_meters, r.heard, r.iterations, r.converged ? 1 : 0};
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_calibration_count(const toaloc_experiment* exp, size_t* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = exp->result.calibration ? exp->result.calibration->entries.size() : 0;
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_get_calibration_entry(const toaloc_experiment* exp, size_t index,
                                                  toaloc_calibration_entry* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  if (!exp->result.calibration || index >= exp->result.calibration->entries.size())
    return fail(TOALOC_ERR_ARGUMENT, "calibration index out of range");
  auto it = exp->result.calibration->entries.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(index));
  *out = {it->first, it->second.delta_T_hat, it->second.n_obs, it->second.std_err};
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_track_count(const toaloc_experiment* exp, size_t* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = exp->result.track.size();
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_get_track_row(const toaloc_experiment* exp, size_t index, toaloc_track_row* out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  if (index >= exp->result.track.size()) return fail(TOALOC_ERR_ARGUMENT, "track index out of range");
  const toaloc::TrackRow& r = exp->result.track[index];
  toaloc_track_row row{};
  row.epoch_time = r.epoch_time;
  row.dimension = static_cast<int>(r.mean.size()) / 2;
  for (Eigen::Index k = 0; k < r.mean.size() && k < 6; ++k) {
    row.mean[k] = r.mean[k];
    row.variance[k] = r.variance[k];
  }
  row.updated = r.updated ? 1 : 0;
  row.nis = r.nis;
  *out = row;
  return TOALOC_OK;
}

toaloc_status toaloc_experiment_records_csv(const toaloc_experiment* exp, char* buf, size_t capacity, size_t* needed) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(needed);
  return guarded([&] {
    const std::string text = toaloc::records_to_csv(exp->result.records);
    *needed = text.size() + 1;
    if (buf == nullptr) return;
    if (capacity < text.size() + 1) throw toaloc::invalid_argument("records_csv: buffer too small");
    std::memcpy(buf, text.c_str(), text.size() + 1);
  });
}

toaloc_status toaloc_experiment_report(const toaloc_experiment* exp, toaloc_report** out) {
  TOALOC_REQUIRE(exp);
  TOALOC_REQUIRE(out);
  *out = nullptr;
  if (exp->result.records.empty()) return fail(TOALOC_ERR_ARGUMENT, "experiment has no records; run the solve stage");
  return guarded([&] { *out = make_report(exp->result.records); });
}

toaloc_status toaloc_report_from_records_csv(const char* path, toaloc_report** out) {
  TOALOC_REQUIRE(path);
  TOALOC_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    auto records = toaloc::records_from_csv(read_text(path));
    if (records.empty()) throw toaloc::config_error(std::string(path) + ": no records");
    *out = make_report(std::move(records));
  });
}

toaloc_status toaloc_report_row_count(const toaloc_report* report, size_t* out) {
  TOALOC_REQUIRE(report);
  TOALOC_REQUIRE(out);
  *out = report->rows.size();
  return TOALOC_OK;
}

toaloc_status toaloc_report_get_row(const toaloc_report* report, size_t index, toaloc_report_row* out) {
  TOALOC_REQUIRE(report);
  TOALOC_REQUIRE(out);
  if (index >= report->rows.size()) return fail(TOALOC_ERR_ARGUMENT, "report row index out of range");
  const toaloc::ReportRow& r = report->rows[index];
  *out = {r.solver.c_str(), r.count, r.p50, r.p90, r.mean, r.convergence_rate, r.ratio_p50, r.ratio_p90};
  return TOALOC_OK;
}

toaloc_status toaloc_report_write(const toaloc_report* report, const char* dir) {
  TOALOC_REQUIRE(report);
  TOALOC_REQUIRE(dir);
  return guarded([&] {
    const std::filesystem::path d(dir);
    std::error_code ec;
    std::filesystem::create_directories(d, ec);
    if (ec) throw toaloc::runtime_error("cannot create '" + d.string() + "': " + ec.message());
    auto put = [&](const char* name, const std::string& body) {
      std::ofstream out(d / name, std::ios::binary | std::ios::trunc);
      out << body;
      if (!out) throw toaloc::runtime_error("cannot write '" + (d / name).string() + "'");
    };
    put("report.csv", toaloc::report_to_csv(report->rows));
    put("report.json", toaloc::report_to_json(report->rows));
    std::ostringstream cdf;
    cdf << "solver,error_meters,fraction\n";
    for (const toaloc::ReportRow& row : report->rows) {
      std::vector<double> errors;
      for (const toaloc::ErrorRecord& r : report->records)
        if (r.solver == row.solver) errors.push_back(r.error_meters);
      for (const auto& [e, f] : toaloc::empirical_cdf(errors))
        cdf << row.solver << ',' << toaloc::format_number(e) << ',' << toaloc::format_number(f) << '\n';
    }
    put("cdf.csv", cdf.str());
  });
}

void toaloc_report_free(toaloc_report* report) { delete report; }

toaloc_status toaloc_prior_create(double sigma_clk, int K, int L, toaloc_prior** out) {
  TOALOC_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new toaloc_prior{toaloc::NlosPrior::build(sigma_clk, K, L)}; });
}

toaloc_status toaloc_prior_line_of_sight(double sigma_clk, toaloc_prior** out) {
  TOALOC_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new toaloc_prior{toaloc::NlosPrior::line_of_sight(sigma_clk)}; });
}

toaloc_status toaloc_prior_size(const toaloc_prior* prior, size_t* out) {
  TOALOC_REQUIRE(prior);
  TOALOC_REQUIRE(out);
  *out = prior->prior.size();
  return TOALOC_OK;
}

toaloc_status toaloc_prior_masses(const toaloc_prior* prior, double* out, size_t capacity) {
  TOALOC_REQUIRE(prior);
  TOALOC_REQUIRE(out);
  const auto masses = prior->prior.masses();
  const size_t n = std::min(capacity, masses.size());
  std::copy_n(masses.begin(), n, out);
  return TOALOC_OK;
}

toaloc_status toaloc_prior_bias(const toaloc_prior* prior, size_t index, double* out) {
  TOALOC_REQUIRE(prior);
  TOALOC_REQUIRE(out);
  if (index >= prior->prior.size()) return fail(TOALOC_ERR_ARGUMENT, "prior index out of range");
  *out = prior->prior.bias_value(index);
  return TOALOC_OK;
}

void toaloc_prior_free(toaloc_prior* prior) { delete prior; }

toaloc_status toaloc_solve_epoch(const char* solver, const toaloc_epoch_input* in, const toaloc_prior* prior,
                                 double sigma_clk, toaloc_solution* out) {
  TOALOC_REQUIRE(solver);
  TOALOC_REQUIRE(in);
  TOALOC_REQUIRE(out);
  TOALOC_REQUIRE(in->ap_ids);
  TOALOC_REQUIRE(in->ap_positions);
  TOALOC_REQUIRE(in->obs_ap_ids);
  TOALOC_REQUIRE(in->toas);
  const auto kind = toaloc::parse_solver(solver);
  if (!kind) return fail(TOALOC_ERR_ARGUMENT, std::string("unknown solver '") + solver + "' (valid: ep, linear, nonlinear)");
  if (in->dimension != 2 && in->dimension != 3) return fail(TOALOC_ERR_ARGUMENT, "dimension must be 2 or 3");

  return guarded([&] {
    const int d = in->dimension;
    std::vector<toaloc::AccessPoint> aps;
    std::map<int, double> delays;
    for (size_t j = 0; j < in->n_aps; ++j) {
      toaloc::Vector p(d);
      for (int k = 0; k < d; ++k) p[k] = in->ap_positions[j * static_cast<size_t>(d) + static_cast<size_t>(k)];
      aps.push_back({in->ap_ids[j], toaloc::Point(std::move(p)), {}, 0.0});
      if (in->cal_delays) delays[in->ap_ids[j]] = in->cal_delays[j];
    }
    toaloc::ToaEpoch epoch;
    epoch.reference_ap = in->reference_ap;
    for (size_t i = 0; i < in->n_obs; ++i) epoch.observations.push_back({in->obs_ap_ids[i], in->toas[i]});
    if (auto problems = toaloc::validate_epoch(epoch); !problems.empty())
      throw toaloc::invalid_argument("epoch: " + problems.front());

    toaloc_solution sol{};
    if (*kind == toaloc::SolverKind::ep) {
      toaloc::BoundingBox box;
      if (in->box_lo && in->box_hi) {
        box.lo = Eigen::Map<const toaloc::Vector>(in->box_lo, d);
        box.hi = Eigen::Map<const toaloc::Vector>(in->box_hi, d);
      } else {
        std::vector<toaloc::Point> pts;
        for (const auto& ap : aps) pts.push_back(ap.position);
        box = toaloc::BoundingBox::enclosing(pts);
      }
      toaloc::SolverInputs inputs(epoch, aps,
                                  prior ? prior->prior : toaloc::NlosPrior::line_of_sight(sigma_clk), sigma_clk);
      inputs.cal_delays = delays;
      const toaloc::PositionEstimate est = toaloc::run_ep(inputs, box);
      for (int k = 0; k < d; ++k) sol.position[k] = est.mean[k];
      sol.tau = est.tau();
      for (int i = 0; i <= d; ++i)
        for (int j = 0; j <= d; ++j) sol.covariance[i * (d + 1) + j] = est.covariance(i, j);
      sol.iterations = est.iterations;
      sol.converged = est.converged ? 1 : 0;
    } else {
      const toaloc::BaselineResult b = *kind == toaloc::SolverKind::linear
                                           ? toaloc::solve_linear(epoch, aps, delays)
                                           : toaloc::solve_nonlinear(epoch, aps, delays);
      for (int k = 0; k < d; ++k) sol.position[k] = b.position[k];
      sol.tau = b.tau;
      sol.iterations = b.iterations;
      sol.converged = b.status == toaloc::BaselineStatus::ok ? 1 : 0;
    }
    *out = sol;
  });
}

toaloc_status toaloc_empirical_cdf(const double* errors, size_t n, double* sorted_out, double* fraction_out) {
  TOALOC_REQUIRE(errors);
  TOALOC_REQUIRE(sorted_out);
  TOALOC_REQUIRE(fraction_out);
  return guarded([&] {
    const auto cdf = toaloc::empirical_cdf(std::vector<double>(errors, errors + n));
    for (size_t i = 0; i < cdf.size(); ++i) {
      sorted_out[i] = cdf[i].first;
      fraction_out[i] = cdf[i].second;
    }
  });
}

toaloc_status toaloc_percentile(const double* values, size_t n, double p, double* out) {
  TOALOC_REQUIRE(values);
  TOALOC_REQUIRE(out);
  return guarded([&] { *out = toaloc::percentile(std::vector<double>(values, values + n), p); });
}

}  // extern "C"
