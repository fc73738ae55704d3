#include "fixtures.hpp"
#include "toaloc/tracking.hpp"

#include <doctest.h>

using namespace toaloc;

TEST_CASE("kf_init") {
  const TrackState s = kf_init(position_fix({30, 40}, 4.0), 1.5, 100.0);
  REQUIRE(s.mean.size() == 4);
  CHECK(s.mean[0] == 30.0);
  CHECK(s.mean[1] == 40.0);
  CHECK(s.mean[2] == 0.0);
  CHECK(s.mean[3] == 0.0);
  CHECK(s.covariance(0, 0) == doctest::Approx(4.0));
  CHECK(s.covariance(2, 2) == doctest::Approx(100.0));
  CHECK(s.covariance(0, 2) == 0.0);
  CHECK(s.epoch_time == 1.5);
  CHECK(s.dimension() == 2);
  CHECK_NOTHROW(kf_init(position_fix({30, 40}, 4.0), 0.0, 0.0));
}

TEST_CASE("kf_predict") {
  TrackState s = kf_init(position_fix({0, 0}, 1.0), 0.0, 0.0);
  s.mean[2] = 10.0;
  const TrackState p = kf_predict(s, 0.5, 0.0);
  CHECK(p.mean[0] == doctest::Approx(5.0));
  CHECK(p.epoch_time == doctest::Approx(0.5));
  CHECK(p.covariance(0, 0) == doctest::Approx(1.0));
  const TrackState q = kf_predict(s, 0.5, 2.0);
  // White acceleration: position variance grows by q dt^3 / 3.
  CHECK(q.covariance(0, 0) == doctest::Approx(1.0 + 2.0 * 0.125 / 3.0));
  CHECK(q.covariance(2, 2) == doctest::Approx(2.0 * 0.5));
  CHECK(q.covariance(0, 2) == doctest::Approx(2.0 * 0.25 / 2.0));
}

TEST_CASE("constant velocity is learned from exact fixes") {
  TrackState s = kf_init(position_fix({0, 0}, 0.01), 0.0, 100.0);
  for (int k = 1; k <= 20; ++k) s = kf_step(s, 1.0, position_fix({3.0 * k, -2.0 * k}, 0.01), 0.0);
  CHECK(s.mean[2] == doctest::Approx(3.0).epsilon(0.01));
  CHECK(s.mean[3] == doctest::Approx(-2.0).epsilon(0.01));
}

TEST_CASE("a useless measurement leaves the prediction") {
  const TrackState s = kf_init(position_fix({10, 10}, 1.0), 0.0, 4.0);
  const KalmanUpdate u = kf_update(s, 1.0, position_fix({500, 500}, 1e12), 0.1);
  const TrackState p = kf_predict(s, 1.0, 0.1);
  CHECK((u.state.mean - p.mean).norm() < 1e-6);
  CHECK(u.nis == doctest::Approx(2.0 * 490.0 * 490.0 / 1e12).epsilon(1e-3));
}

TEST_CASE("fixed_r overrides the estimate covariance") {
  const TrackState s = kf_init(position_fix({0, 0}, 1.0), 0.0, 1.0);
  const KalmanUpdate a = kf_update(s, 1.0, position_fix({1, 0}, 1e12), 0.0, 1.0);
  const KalmanUpdate b = kf_update(s, 1.0, position_fix({1, 0}, 1.0), 0.0);
  CHECK((a.state.mean - b.state.mean).norm() < 1e-12);
  CHECK(a.innovation_covariance(0, 0) == doctest::Approx(b.innovation_covariance(0, 0)));
}

TEST_CASE("covariance trace does not grow with q = 0 and steady fixes") {
  TrackState s = kf_init(position_fix({0, 0}, 9.0), 0.0, 50.0);
  double trace = s.covariance.trace();
  for (int k = 1; k <= 30; ++k) {
    s = kf_step(s, 0.1, position_fix({0.1 * k, 0}, 9.0), 0.0);
    CHECK(s.covariance.trace() <= trace + 1e-9);
    trace = s.covariance.trace();
    CHECK(Eigen::LLT<Matrix>(s.covariance).info() == Eigen::Success);
  }
}

TEST_CASE("argument checks") {
  const TrackState s = kf_init(position_fix({0, 0}, 1.0), 0.0, 1.0);
  CHECK_THROWS(kf_predict(s, -1.0, 1.0));
  CHECK_THROWS(kf_predict(s, 1.0, -1.0));
  CHECK_THROWS(kf_update(s, 1.0, position_fix({0, 0, 0}, 1.0), 1.0));
}
