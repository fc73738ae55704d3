#include "fixtures.hpp"
#include "toaloc/calibration.hpp"

#include <doctest.h>

#include <cmath>

using namespace toaloc;

namespace {

Scenario delayed_square(std::vector<double> delays) {
  Scenario s = fixtures::square4();
  for (std::size_t j = 0; j < s.aps.size(); ++j) s.aps[j].true_cal_delay = delays[j];
  return s;
}

std::vector<ToaEpoch> train(const Scenario& s, const ErrorModel& m, int n, std::uint64_t seed) {
  std::vector<ToaEpoch> out;
  for (int i = 0; i < n; ++i) {
    Rng rng = make_rng(seed, {static_cast<std::uint64_t>(i)});
    out.push_back(simulate_epoch(s, 0, m, rng, nullptr, i));
  }
  return out;
}

}  // namespace

TEST_CASE("noiseless training recovers the delays") {
  const Scenario s = delayed_square({0, 12, 30, 7});
  const auto epochs = train(s, fixtures::noiseless(), 5, 1);
  const CalibrationTable t = estimate_calibration(epochs, s.aps, s.device_positions[0]);
  REQUIRE(t.entries.size() == 4);
  CHECK(t.entries.at(1).delta_T_hat == 0.0);
  CHECK(t.entries.at(2).delta_T_hat == doctest::Approx(12.0).epsilon(1e-9));
  CHECK(t.entries.at(3).delta_T_hat == doctest::Approx(30.0).epsilon(1e-9));
  CHECK(t.entries.at(4).delta_T_hat == doctest::Approx(7.0).epsilon(1e-9));
  CHECK(t.entries.at(2).n_obs == 5);

  const CalibrationTable med =
      estimate_calibration(epochs, s.aps, s.device_positions[0], 1, CalibrationEstimator::median);
  CHECK(med.entries.at(3).delta_T_hat == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("APs below min_obs are left out") {
  const Scenario s = delayed_square({0, 12, 30, 7});
  auto epochs = train(s, fixtures::noiseless(), 4, 1);
  for (int i = 0; i < 3; ++i) epochs[i].observations.pop_back();
  const CalibrationTable t = estimate_calibration(epochs, s.aps, s.device_positions[0], 2);
  CHECK(t.entries.count(4) == 0);
  CHECK(t.entries.count(2) == 1);
  CHECK(t.delays().size() == 3);
}

TEST_CASE("apply_calibration") {
  const Scenario s = fixtures::square4();
  CalibrationTable t;
  t.entries[1] = {0.0, 1, 0.0};
  t.entries[2] = {12.0, 1, 0.0};
  ToaEpoch e = fixtures::exact_epoch(s.aps, {30, 40});
  const double base = e.observations[1].toa;
  CHECK(base == doctest::Approx(30.62258).epsilon(1e-7));
  e.observations[1].toa += 12.0;
  const ToaEpoch once = apply_calibration(e, t);
  CHECK(once.observations[1].toa == doctest::Approx(base));
  CHECK(once.observations[2].toa == e.observations[2].toa);
  CHECK(once.observations[0].toa == 0.0);
  const ToaEpoch twice = apply_calibration(once, t);
  CHECK(twice.observations[1].toa == doctest::Approx(base - 12.0));
}

TEST_CASE("calibrate then solve round trip") {
  const Scenario s = delayed_square({0, 12, 30, 7});
  const CalibrationTable t = estimate_calibration(train(s, fixtures::noiseless(), 3, 2), s.aps, s.device_positions[0]);
  Scenario test = s;
  test.device_positions = {{70, 20}};
  Rng rng = make_rng(9);
  const ToaEpoch e = apply_calibration(simulate_epoch(test, 0, fixtures::noiseless(), rng), t);
  const ToaEpoch clean = fixtures::exact_epoch(s.aps, {70, 20});
  for (std::size_t j = 0; j < e.observations.size(); ++j)
    CHECK(e.observations[j].toa == doctest::Approx(clean.observations[j].toa).epsilon(1e-9));
}

TEST_CASE("estimation error shrinks like one over root n") {
  const Scenario s = delayed_square({0, 12, 30, 7});
  ErrorModel m;
  m.sigma_clk = 5.0;
  auto rmse = [&](int n) {
    double ss = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      const auto t = estimate_calibration(train(s, m, n, 1000 + static_cast<std::uint64_t>(r)), s.aps,
                                          s.device_positions[0]);
      ss += std::pow(t.entries.at(3).delta_T_hat - 30.0, 2);
    }
    return std::sqrt(ss / reps);
  };
  const double r4 = rmse(4), r64 = rmse(64);
  // Each delay estimate differences two noisy ToAs: std sigma sqrt(2 / n).
  CHECK(r4 == doctest::Approx(5.0 * std::sqrt(2.0 / 4)).epsilon(0.15));
  CHECK(r4 / r64 == doctest::Approx(4.0).epsilon(0.2));
}

TEST_CASE("calibration needs epochs") {
  const Scenario s = fixtures::square4();
  CHECK_THROWS(estimate_calibration(std::vector<ToaEpoch>{}, s.aps, s.device_positions[0]));
}
