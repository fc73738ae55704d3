#include "fixtures.hpp"
#include "toaloc/error.hpp"
#include "toaloc/harness.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace toaloc;

namespace {

const char* kSquare = R"("scenario": {"dimension": 2,
  "aps": [{"id": 1, "position": [0, 0]}, {"id": 2, "position": [100, 0]},
          {"id": 3, "position": [0, 100]}, {"id": 4, "position": [100, 100]}],
  "device_positions": [[30, 40], [70, 20]]})";

std::string config(const std::string& extra = "") {
  return std::string("{") + kSquare + (extra.empty() ? "" : ", " + extra) + "}";
}

std::string config_error_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  FAIL("expected a config error");
  return {};
}

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("config defaults") {
  const ExperimentConfig c = parse_config(config());
  CHECK(c.solver.sigma_clk == 20.0);
  CHECK(c.solver.K == 10);
  CHECK(c.solver.L == 1000);
  CHECK(c.solvers == std::vector<SolverKind>{SolverKind::ep});
  CHECK(c.error_model.sigma_clk == 20.0);
  CHECK(c.epochs_per_position == 1);
  CHECK_FALSE(c.calibration);
  CHECK_FALSE(c.tracking);
}

TEST_CASE("config errors name the field") {
  CHECK(config_error_message(config(R"("solver": {"K": 0})")).find("solver.K") != std::string::npos);
  const std::string unknown = config_error_message(config(R"("solvers": ["ep", "kalman"])"));
  CHECK(unknown.find("solvers[1]") != std::string::npos);
  CHECK(unknown.find("ep, linear, nonlinear") != std::string::npos);
  CHECK(config_error_message(config(R"("error_model": {"p_hear": 2})")).find("error_model") != std::string::npos);
  CHECK(config_error_message(config(R"("typo": 1)")).find("typo") != std::string::npos);
  CHECK(config_error_message("{\"scenario\": ").find("config") != std::string::npos);
  CHECK(config_error_message("{}").find("scenario") != std::string::npos);
  CHECK(config_error_message(config(R"("error_model": {"fixed_bias": {"9": 5}})")).find("fixed_bias.9") !=
        std::string::npos);
  CHECK(config_error_message(config(R"("solver": {"ep": {"weight_mode": "paper", "tilted": "radial"}})"))
            .find("solver.ep.tilted") != std::string::npos);
}

TEST_CASE("solver lists") {
  CHECK(parse_solver_list("ep,linear,nonlinear").size() == 3);
  CHECK(parse_solver_list(" linear , ep ") == std::vector<SolverKind>{SolverKind::linear, SolverKind::ep});
  CHECK_THROWS_AS(parse_solver_list("ep,ep"), Error);
  CHECK_THROWS_AS(parse_solver_list("gauss"), Error);
}

TEST_CASE("empirical_cdf and percentile") {
  const auto cdf = empirical_cdf({3, 1, 2});
  REQUIRE(cdf.size() == 3);
  CHECK(cdf[0].first == 1.0);
  CHECK(cdf[0].second == doctest::Approx(1.0 / 3));
  CHECK(cdf[2].first == 3.0);
  CHECK(cdf[2].second == 1.0);
  const auto flat = empirical_cdf({5, 5, 5});
  CHECK(flat.back().second == 1.0);
  CHECK(flat.front().first == 5.0);
  CHECK_THROWS(empirical_cdf({}));

  std::vector<double> v;
  for (int i = 100; i >= 1; --i) v.push_back(i);
  CHECK(percentile(v, 0.9) == 90.0);
  CHECK(percentile(v, 0.5) == 50.0);
  CHECK(percentile(v, 1.0) == 100.0);
  CHECK(percentile({7.0}, 0.01) == 7.0);
  CHECK_THROWS(percentile(v, 0.0));
  CHECK_THROWS(percentile({}, 0.5));
}

TEST_CASE("compare_report") {
  std::vector<ErrorRecord> records;
  for (int i = 0; i < 10; ++i) {
    records.push_back({i, "ep", 1.0 + i, 4, 3, true});
    records.push_back({i, "linear", 2.0 * (1.0 + i), 4, 1, i % 2 == 0});
  }
  const auto rows = compare_report(records);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].solver == "ep");
  CHECK(rows[0].ratio_p90 == 1.0);
  CHECK(rows[1].p90 == 18.0);
  CHECK(rows[1].ratio_p90 == doctest::Approx(2.0));
  CHECK(rows[1].convergence_rate == doctest::Approx(0.5));
  CHECK(rows[0].mean == doctest::Approx(5.5));

  const auto back = records_from_csv(records_to_csv(records));
  REQUIRE(back.size() == records.size());
  CHECK(back[3].solver == records[3].solver);
  CHECK(back[3].error_meters == records[3].error_meters);
  CHECK(back[3].converged == records[3].converged);
}

TEST_CASE("scenario JSON round trip") {
  Scenario s = fixtures::square4();
  s.aps[1].true_cal_delay = 12.345678901234;
  s.aps[2].true_position_offset = Point{0.1, -0.2};
  s.device_positions.push_back({1.0 / 3.0, 2.0 / 7.0});
  const Scenario t = scenario_from_json(scenario_to_json(s));
  REQUIRE(t.aps.size() == 4);
  CHECK(t.aps[1].true_cal_delay == doctest::Approx(s.aps[1].true_cal_delay).epsilon(1e-12));
  CHECK(distance(t.aps[2].true_position(), s.aps[2].true_position()) < 1e-12);
  CHECK(distance(t.device_positions[1], s.device_positions[1]) < 1e-12);
  CHECK((t.bounding_box.hi - s.bounding_box.hi).norm() < 1e-12);
}

TEST_CASE("format_number round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5})
    CHECK(std::stod(format_number(v)) == v);
  CHECK(format_number(2.0) == "2");
}

TEST_CASE("generators") {
  GeneratorSpec g;
  const Scenario kart = generate_scenario(g, 1);
  CHECK(kart.aps.size() == 15);
  CHECK(kart.device_positions.size() == 14);
  CHECK(validate_scenario(kart).empty());
  g.kind = "uniform";
  g.n_aps = 6;
  const Scenario a = generate_scenario(g, 4), b = generate_scenario(g, 4);
  CHECK(distance(a.aps[3].position, b.aps[3].position) == 0.0);
  g.kind = "metro";
  CHECK(validate_scenario(generate_scenario(g, 2)).empty());
}

TEST_CASE("solve stage produces one record per epoch and solver") {
  ExperimentConfig c = parse_config(R"({"seed": 3, "scenario": {"generator": {"kind": "go_kart"}},
    "error_model": {"sigma_clk": 1.0}, "solvers": ["linear", "nonlinear"], "epochs_per_position": 100,
    "solver": {"sigma_clk": 1.0}})");
  const ExperimentResult r = run_stages(c, Stage::solve);
  CHECK(r.epochs.size() == 1400);
  const auto rows = compare_report(r.records);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].count == 1400);
  CHECK(rows[1].count == 1400);
  CHECK(r.skipped_epochs.empty());
}

TEST_CASE("noiseless runs are exact") {
  ExperimentConfig c = parse_config(config(R"("error_model": {"sigma_clk": 0}, "solvers": ["ep", "linear", "nonlinear"],
    "solver": {"sigma_clk": 0.001, "prior": "los"})"));
  const ExperimentResult r = run_stages(c, Stage::solve);
  REQUIRE(r.records.size() == 6);
  for (const ErrorRecord& rec : r.records) {
    CAPTURE(rec.solver);
    CHECK(rec.error_meters < 1e-3);
  }
}

TEST_CASE("identical solvers compare equal") {
  ExperimentConfig c = parse_config(config(R"("error_model": {"sigma_clk": 1}, "solvers": ["linear"],
    "epochs_per_position": 20)"));
  auto records = run_stages(c, Stage::solve).records;
  const std::size_t n = records.size();
  for (std::size_t i = 0; i < n; ++i) {
    ErrorRecord copy = records[i];
    copy.solver = "linear_copy";
    records.push_back(copy);
  }
  const auto rows = compare_report(records);
  CHECK(rows[1].ratio_p50 == 1.0);
  CHECK(rows[1].ratio_p90 == 1.0);
}

TEST_CASE("runs are deterministic in the seed") {
  const std::string text = config(R"("seed": 42, "error_model": {"sigma_clk": 2, "nlos": {"K": 10, "L": 100}},
    "solvers": ["ep", "nonlinear"], "epochs_per_position": 3, "solver": {"sigma_clk": 2})");
  ExperimentConfig c = parse_config(text);
  const auto a = records_to_csv(run_stages(c, Stage::solve).records);
  c.threads = 2;
  const auto b = records_to_csv(run_stages(c, Stage::solve).records);
  CHECK(a == b);
  c.seed = 43;
  CHECK(records_to_csv(run_stages(c, Stage::solve).records) != a);
}

TEST_CASE("calibration and tracking stages") {
  ExperimentConfig c = parse_config(config(R"("seed": 1, "error_model": {"sigma_clk": 1, "sigma_dT": 10},
    "calibration": {"train_epochs": 20, "known_position": [50, 50]},
    "tracking": {"dt": 0.1, "q": 1, "v_var": 10}, "epochs_per_position": 2, "solver": {"sigma_clk": 1})"));
  const ExperimentResult r = run_stages(c, Stage::track);
  REQUIRE(r.calibration);
  CHECK(r.calibration->entries.size() == 4);
  CHECK(r.training_epochs.size() == 20);
  for (const AccessPoint& ap : r.scenario.aps)
    CHECK(std::abs(r.calibration->entries.at(ap.id).delta_T_hat - ap.true_cal_delay) < 2.0);
  CHECK(r.track.size() == r.epochs.size());

  const auto dir = std::filesystem::temp_directory_path() / "toaloc_harness_test";
  std::filesystem::remove_all(dir);
  write_artifacts(r, c, dir);
  for (const char* name : {"scenario.json", "epochs.csv", "records.csv", "calibration.json", "track.csv", "report.csv"})
    CHECK(std::filesystem::exists(dir / name));
  CHECK(read(dir / "records.csv") == records_to_csv(r.records));
  std::filesystem::remove_all(dir);
}
