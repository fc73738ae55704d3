// SPDX-License-Identifier: Apache-2.0
// Command-line front end over the C API.
#include "toaloc/toaloc.h"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code(toaloc_status status) {
  if (status == TOALOC_OK) return kExitOk;
  return status == TOALOC_ERR_CONFIG ? kExitConfig : kExitRuntime;
}

int report_failure(toaloc_status status) {
  std::fprintf(stderr, "toaloc: %s\n", toaloc_last_error());
  return exit_code(status);
}

struct Shared {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_shared(CLI::App* cmd, Shared& s, bool config_required) {
  auto* opt = cmd->add_option("--config", s.config, "Experiment configuration (JSON)")->check(CLI::ExistingFile);
  if (config_required) opt->required();
  cmd->add_option("--seed", s.seed, "Override the configured seed");
  cmd->add_option("--out", s.out, "Override the output directory");
}

class Experiment {
public:
  ~Experiment() { toaloc_experiment_free(exp_); }

  toaloc_status open(const Shared& s) {
    toaloc_status st = toaloc_experiment_load(s.config.c_str(), &exp_);
    if (st != TOALOC_OK) return st;
    if (s.seed && (st = toaloc_experiment_set_seed(exp_, *s.seed)) != TOALOC_OK) return st;
    if (!s.out.empty() && (st = toaloc_experiment_set_output_dir(exp_, s.out.c_str())) != TOALOC_OK) return st;
    return TOALOC_OK;
  }

  toaloc_experiment* get() const { return exp_; }

private:
  toaloc_experiment* exp_ = nullptr;
};

void print_report(const toaloc_report* report) {
  size_t n = 0;
  toaloc_report_row_count(report, &n);
  std::printf("%-10s %7s %12s %12s %12s %8s %9s %9s\n", "solver", "count", "p50_m", "p90_m", "mean_m", "conv",
              "p50_ratio", "p90_ratio");
  for (size_t i = 0; i < n; ++i) {
    toaloc_report_row r{};
    toaloc_report_get_row(report, i, &r);
    std::printf("%-10s %7zu %12.4f %12.4f %12.4f %8.3f %9.3f %9.3f\n", r.solver, r.count, r.p50, r.p90, r.mean,
                r.convergence_rate, r.ratio_p50, r.ratio_p90);
  }
}

int run_report_of(const Experiment& e) {
  toaloc_report* report = nullptr;
  const toaloc_status st = toaloc_experiment_report(e.get(), &report);
  if (st != TOALOC_OK) return report_failure(st);
  print_report(report);
  toaloc_report_free(report);
  return kExitOk;
}

int cmd_simulate(const Shared& s) {
  Experiment e;
  toaloc_status st = e.open(s);
  if (st == TOALOC_OK) st = toaloc_experiment_run(e.get(), TOALOC_STAGE_SIMULATE, 1);
  if (st != TOALOC_OK) return report_failure(st);
  size_t epochs = 0;
  toaloc_experiment_epoch_count(e.get(), &epochs);
  std::printf("simulated %zu epochs\n", epochs);
  return kExitOk;
}

int cmd_calibrate(const Shared& s) {
  Experiment e;
  toaloc_status st = e.open(s);
  if (st == TOALOC_OK) st = toaloc_experiment_run(e.get(), TOALOC_STAGE_CALIBRATE, 1);
  if (st != TOALOC_OK) return report_failure(st);
  size_t n = 0;
  toaloc_experiment_calibration_count(e.get(), &n);
  std::printf("%6s %14s %6s %10s\n", "ap_id", "delta_T_hat_m", "n_obs", "std_err_m");
  for (size_t i = 0; i < n; ++i) {
    toaloc_calibration_entry c{};
    toaloc_experiment_get_calibration_entry(e.get(), i, &c);
    std::printf("%6d %14.4f %6d %10.4f\n", c.ap_id, c.delta_T_hat, c.n_obs, c.std_err);
  }
  return kExitOk;
}

int cmd_solve(const Shared& s, const std::string& solvers) {
  Experiment e;
  toaloc_status st = e.open(s);
  if (st == TOALOC_OK && !solvers.empty()) st = toaloc_experiment_set_solvers(e.get(), solvers.c_str());
  if (st == TOALOC_OK) st = toaloc_experiment_run(e.get(), TOALOC_STAGE_SOLVE, 1);
  if (st != TOALOC_OK) return report_failure(st);
  size_t skipped = 0;
  toaloc_experiment_skipped_count(e.get(), &skipped);
  if (skipped > 0) std::printf("%zu epochs skipped (too few APs heard)\n", skipped);
  return run_report_of(e);
}

int cmd_track(const Shared& s) {
  Experiment e;
  toaloc_status st = e.open(s);
  if (st == TOALOC_OK) st = toaloc_experiment_run(e.get(), TOALOC_STAGE_TRACK, 1);
  if (st != TOALOC_OK) return report_failure(st);
  size_t n = 0;
  toaloc_experiment_track_count(e.get(), &n);
  std::printf("tracked %zu epochs\n", n);
  return run_report_of(e);
}

int cmd_report(const Shared& s, const std::string& records) {
  std::string path = records;
  if (path.empty()) {
    if (s.out.empty()) {
      std::fprintf(stderr, "toaloc: report needs --records or --out\n");
      return kExitConfig;
    }
    path = (std::filesystem::path(s.out) / "records.csv").string();
  }
  toaloc_report* report = nullptr;
  toaloc_status st = toaloc_report_from_records_csv(path.c_str(), &report);
  if (st != TOALOC_OK) return report_failure(st);
  const std::string dir = s.out.empty() ? std::filesystem::path(path).parent_path().string() : s.out;
  st = toaloc_report_write(report, dir.empty() ? "." : dir.c_str());
  if (st == TOALOC_OK) print_report(report);
  toaloc_report_free(report);
  return st == TOALOC_OK ? kExitOk : report_failure(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic ToA localization: simulate, calibrate, solve, track, report"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(toaloc_version()));

  Shared sim, cal, sol, trk, rep;
  std::string solvers;
  std::string records;

  auto* simulate = app.add_subcommand("simulate", "Simulate epochs from a scenario");
  add_shared(simulate, sim, true);
  auto* calibrate = app.add_subcommand("calibrate", "Estimate per-AP calibration delays");
  add_shared(calibrate, cal, true);
  auto* solve = app.add_subcommand("solve", "Localize every epoch with the selected solvers");
  add_shared(solve, sol, true);
  solve->add_option("--solver", solvers, "Comma separated: ep,linear,nonlinear");
  auto* track = app.add_subcommand("track", "Solve, then filter the fixes with a Kalman tracker");
  add_shared(track, trk, true);
  auto* report = app.add_subcommand("report", "Percentile comparison from records.csv");
  add_shared(report, rep, false);
  report->add_option("--records", records, "records.csv to summarize (default <out>/records.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (simulate->parsed()) return cmd_simulate(sim);
  if (calibrate->parsed()) return cmd_calibrate(cal);
  if (solve->parsed()) return cmd_solve(sol, solvers);
  if (track->parsed()) return cmd_track(trk);
  return cmd_report(rep, records);
}
