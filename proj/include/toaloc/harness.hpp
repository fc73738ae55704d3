// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "toaloc/baselines.hpp"
#include "toaloc/calibration.hpp"
#include "toaloc/ep_solver.hpp"
#include "toaloc/simulator.hpp"
#include "toaloc/tracking.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace toaloc {

enum class SolverKind { ep, linear, nonlinear };

std::string_view to_string(SolverKind kind);
std::optional<SolverKind> parse_solver(std::string_view text);

/// Parse "ep,linear" style lists. Throws config_error naming the valid
/// choices on an unknown entry or a duplicate.
std::vector<SolverKind> parse_solver_list(std::string_view text);

/// Synthetic layouts standing in for the unpublished measurement campaigns.
///   go_kart  15 APs around a 120 m x 80 m site, device on an oval circuit
///   metro    hexagonal cell sites, devices uniform over the inner cells
///   uniform  APs and devices uniform in a square
struct GeneratorSpec {
  std::string kind = "go_kart";
  int n_aps = 15;
  int n_positions = 14;
  double width = 120.0;  // go_kart: site extent; uniform: square side
  double height = 80.0;
  double spacing = 500.0;  // metro inter-site distance
  double margin = 0.0;     // bounding box growth beyond the APs
};

/// Positions are drawn from the seed where the kind calls for it.
Scenario generate_scenario(const GeneratorSpec& spec, std::uint64_t seed);

struct SolverSettings {
  double sigma_clk = 20.0;
  int K = 10;
  int L = 1000;
  bool line_of_sight = false;  // single zero-bias prior instead of (K, L)
  EpConfig ep;
  NonlinearOptions nonlinear;

  NlosPrior prior() const;
};

struct CalibrationSettings {
  int train_epochs = 100;
  Point known_position;
  int min_obs = 1;
  CalibrationEstimator estimator = CalibrationEstimator::mean;
  bool line_of_sight = true;  // training epochs carry no NLOS or fixed bias
  std::optional<double> sigma_clk;  // training noise; default error_model.sigma_clk
};

struct TrackingSettings {
  SolverKind solver = SolverKind::ep;
  double dt = 0.1;
  double q = 1.0;
  double v_var = 100.0;
  std::optional<double> fixed_r;
};

struct ExperimentConfig {
  std::variant<Scenario, GeneratorSpec> scenario;
  std::string scenario_source = "inline";
  ErrorModel error_model;
  std::vector<SolverKind> solvers{SolverKind::ep};
  SolverSettings solver;
  int epochs_per_position = 1;
  int min_heard = 0;  // 0: D + 2, enough for every solver
  std::optional<CalibrationSettings> calibration;
  std::optional<TrackingSettings> tracking;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  unsigned threads = 1;
};

/// Parse and validate. Every failure is a config_error whose message starts
/// with the offending field path (or the line/column for syntax errors).
/// Relative scenario file paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct EstimateRow {
  int epoch_id = 0;
  SolverKind solver = SolverKind::ep;
  Point position;
  double tau = 0.0;
  Matrix covariance;  // (x, tau); empty for baselines
  int iterations = 0;
  bool converged = false;
};

struct ErrorRecord {
  int epoch_id = 0;
  std::string solver;
  double error_meters = 0.0;
  int heard = 0;
  int iterations = 0;
  bool converged = false;
};

struct TrackRow {
  double epoch_time = 0.0;
  Vector mean;      // (x, v)
  Vector variance;  // covariance diagonal
  bool updated = false;  // false: prediction only
  double nis = 0.0;      // normalized innovation squared of the update
};

struct ExperimentResult {
  Scenario scenario;  // with realized ground-truth AP errors
  std::vector<ToaEpoch> training_epochs;
  std::vector<ToaEpoch> epochs;        // as measured, before calibration
  std::vector<std::size_t> device_of;  // device index per epoch
  std::vector<int> skipped_epochs;     // heard fewer than min_heard APs
  std::optional<CalibrationTable> calibration;
  std::vector<EstimateRow> estimates;  // by epoch, then solver order
  std::vector<ErrorRecord> records;
  std::vector<TrackRow> track;
};

enum class Stage { simulate, calibrate, solve, track };

/// Run the pipeline up to and including `stage`. Deterministic in the seed;
/// every solver sees the same epochs.
ExperimentResult run_stages(const ExperimentConfig& cfg, Stage stage);

/// Full run (tracking included when configured) with artifacts written to
/// cfg.output_dir.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Writes whatever the result holds: scenario.json, epochs.csv, truth.csv,
/// training_epochs.csv, calibration.json, estimates.csv, records.csv,
/// track.csv, report.csv, report.json, cdf.csv.
void write_artifacts(const ExperimentResult& result, const ExperimentConfig& cfg, const std::filesystem::path& dir);

// Reporting.

/// Ascending errors paired with k/n. Throws on an empty input.
std::vector<std::pair<double, double>> empirical_cdf(std::vector<double> errors);

/// Nearest-rank percentile: the value at rank ceil(p n), p in (0, 1].
double percentile(std::vector<double> values, double p);

struct ReportRow {
  std::string solver;
  std::size_t count = 0;
  double p50 = 0.0;
  double p90 = 0.0;
  double mean = 0.0;
  double convergence_rate = 0.0;
  double ratio_p50 = 1.0;  // against the first solver
  double ratio_p90 = 1.0;
};

/// One row per solver in order of first appearance.
std::vector<ReportRow> compare_report(const std::vector<ErrorRecord>& records);

// Serialization.

std::string scenario_to_json(const Scenario& scenario);
Scenario scenario_from_json(std::string_view text);

std::string epochs_to_csv(const std::vector<ToaEpoch>& epochs);
std::string records_to_csv(const std::vector<ErrorRecord>& records);
std::vector<ErrorRecord> records_from_csv(std::string_view text);
std::string calibration_to_json(const CalibrationTable& table);
std::string track_to_csv(const std::vector<TrackRow>& track, int dimension);
std::string report_to_csv(const std::vector<ReportRow>& rows);
std::string report_to_json(const std::vector<ReportRow>& rows);

/// Shortest text that parses back to the same double.
std::string format_number(double value);

}  // namespace toaloc
