#include <doctest.h>

#include <cmath>

#include "relnav/ekf.hpp"
#include "relnav/jacobian_check.hpp"
#include "relnav/rng.hpp"
#include "relnav/scenario.hpp"

using namespace relnav;

namespace {

RelativeEkf make_filter(NodeGeometry geometry = default_geometry()) {
  return RelativeEkf(std::move(geometry), MeasurementNoiseConfig{},
                     ProcessNoiseConfig{}, InitializationConfig{});
}

StateEstimate hover_at(const Vec3& position, double t = 10.0) {
  StateEstimate s;
  s.position = position;
  s.timestamp = t;
  return s;
}

Covariance diagonal_cov(double att, double vel, double pos, double bias) {
  Covariance P = Covariance::Zero();
  P.block<3, 3>(kAttErrIdx, kAttErrIdx) = att * Mat3::Identity();
  P.block<3, 3>(kVelIdx, kVelIdx) = vel * Mat3::Identity();
  P.block<3, 3>(kPosIdx, kPosIdx) = pos * Mat3::Identity();
  P.block<3, 3>(kGyroBiasIdx, kGyroBiasIdx) = bias * Mat3::Identity();
  return P;
}

SensorEvent imu_event(double t, const Vec3& omega = Vec3::Zero(),
                      const Vec3& accel = {0, 0, kGravityMagnitude}) {
  ImuSample imu;
  imu.timestamp = t;
  imu.omega = omega;
  imu.accel = accel;
  return make_event(imu);
}

RangeObservation range_obs(int i, int j, double d, double t,
                           std::optional<Quat> target = Quat::Identity()) {
  RangeObservation obs;
  obs.requester_id = i;
  obs.responder_id = j;
  obs.distance = d;
  obs.timestamp = t;
  obs.target_attitude = target;
  return obs;
}

}  // namespace

TEST_CASE("chi-square gate thresholds match tabulated quantiles") {
  CHECK(chi_square_gate_threshold(0.999, 1) == doctest::Approx(10.8276).epsilon(1e-4));
  CHECK(chi_square_gate_threshold(0.999, 2) == doctest::Approx(13.8155).epsilon(1e-4));
  CHECK(chi_square_gate_threshold(0.999, 3) == doctest::Approx(16.2662).epsilon(1e-4));
  CHECK(chi_square_gate_threshold(0.95, 1) == doctest::Approx(3.8415).epsilon(1e-4));
  CHECK(chi_square_gate_threshold(0.95, 3) == doctest::Approx(7.8147).epsilon(1e-4));
  CHECK_THROWS(chi_square_gate_threshold(1.5, 1));
}

TEST_CASE("imu event at hover leaves position and velocity untouched") {
  auto filter = make_filter();
  filter.set_state(hover_at({1.0, -2.0, 0.9}), diagonal_cov(1e-4, 1e-4, 1e-4, 1e-6));
  const auto r = filter.step(imu_event(10.01));
  CHECK(r.action == StepAction::applied);
  CHECK((filter.state().position - Vec3(1.0, -2.0, 0.9)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(filter.state().velocity.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("range innovation beyond the gate leaves the state unchanged") {
  auto filter = make_filter();
  const Vec3 q(2.0, 0.5, 0.9);
  filter.set_state(hover_at(q), diagonal_cov(1e-6, 1e-6, 1e-6, 1e-8));
  const StateEstimate before = filter.state();

  const double predicted =
      predict_range(before, Quat::Identity(), default_geometry().requesters[0],
                    default_geometry().responders[0]);
  const auto r = filter.fuse_range(range_obs(0, 0, predicted + 1.0, 10.0));
  CHECK(r.action == StepAction::gated);
  CHECK(filter.diagnostics().range.gated == 1);
  CHECK((filter.state().position - before.position).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("range with exact prediction leaves the state unchanged") {
  auto filter = make_filter();
  const Vec3 q(2.0, 0.5, 0.9);
  filter.set_state(hover_at(q), diagonal_cov(1e-3, 1e-3, 1e-3, 1e-6));
  const double predicted =
      predict_range(filter.state(), Quat::Identity(), default_geometry().requesters[1],
                    default_geometry().responders[1]);
  const auto r = filter.fuse_range(range_obs(1, 1, predicted, 10.0));
  CHECK(r.action == StepAction::applied);
  CHECK((filter.state().position - q).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single range shrinks variance along the range direction only") {
  // Point antennae so the update is a pure position measurement along u.
  NodeGeometry g = NodeGeometry::make({Vec3::Zero()}, {Vec3::Zero()});
  auto filter = RelativeEkf(g, MeasurementNoiseConfig{}, ProcessNoiseConfig{},
                            InitializationConfig{});
  const double sigma0 = 0.3;
  const Vec3 q(1.0, 2.0, 2.0);  // |q| = 3
  filter.set_state(hover_at(q), diagonal_cov(0.0, 0.0, sigma0 * sigma0, 0.0));

  const double sigma_r = MeasurementNoiseConfig{}.sigma_range;
  const auto r = filter.fuse_range(range_obs(0, 0, q.norm() + 0.01, 10.0));
  CHECK(r.action == StepAction::applied);

  // 1-D Kalman oracle on the projected axis.
  const double want_along = 1.0 / (1.0 / (sigma0 * sigma0) + 1.0 / (sigma_r * sigma_r));
  const Vec3 u = q / q.norm();
  const Mat3 P_pos = filter.covariance().block<3, 3>(kPosIdx, kPosIdx);
  CHECK(u.dot(P_pos * u) == doctest::Approx(want_along).epsilon(1e-9));

  // Orthogonal directions untouched.
  const Vec3 v1 = u.cross(Vec3::UnitX()).normalized();
  const Vec3 v2 = u.cross(v1).normalized();
  CHECK(v1.dot(P_pos * v1) == doctest::Approx(sigma0 * sigma0).epsilon(1e-9));
  CHECK(v2.dot(P_pos * v2) == doctest::Approx(sigma0 * sigma0).epsilon(1e-9));
}

TEST_CASE("flow fusion with matching observation is a no-op") {
  auto filter = make_filter();
  StateEstimate s = hover_at({0.0, 0.0, 2.0});
  s.velocity = Vec3(0.6, -0.2, 0.1);
  filter.set_state(s, diagonal_cov(1e-4, 1e-2, 1e-3, 1e-6));
  const auto f = predict_flow(s);
  FlowObservation obs;
  obs.v_fx = f.x();
  obs.v_fy = f.y();
  obs.timestamp = 10.0;
  const auto r = filter.fuse_flow(obs);
  CHECK(r.action == StepAction::applied);
  CHECK((filter.state().velocity - s.velocity).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("flow pseudo-measurement reconstructs the velocity from steps 14-15") {
  auto filter = make_filter();
  const double q_z = 2.0;
  filter.set_state(hover_at({0.0, 0.0, q_z}), diagonal_cov(0.0, 0.04, 0.0, 0.0));

  FlowObservation obs;
  obs.v_fx = 0.5;
  obs.v_fy = 0.0;
  obs.timestamp = 10.0;
  const auto r = filter.fuse_flow(obs);
  CHECK(r.action == StepAction::applied);

  // Pseudo-measurement is (1, 0, 0) m/s; a scalar Kalman update against the
  // zero prior moves the estimate by the gain times the innovation.
  const double sigma_v = q_z * MeasurementNoiseConfig{}.sigma_flow;
  const double gain = 0.04 / (0.04 + sigma_v * sigma_v);
  CHECK(filter.state().velocity.x() == doctest::Approx(gain * 1.0).epsilon(1e-9));
  CHECK(filter.state().velocity.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(filter.state().velocity.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("artificial flow keeps the vertical velocity self-consistent") {
  auto filter = make_filter();
  StateEstimate s = hover_at({0.0, 0.0, 2.0});
  s.velocity = Vec3(0.0, 0.0, 0.4);
  filter.set_state(s, diagonal_cov(1e-4, 0.04, 1e-3, 1e-6));

  // Observed 2D flow matches the state; the artificial third component is
  // built from the estimate, so the vertical innovation vanishes exactly.
  FlowObservation obs;
  obs.v_fx = 0.0;
  obs.v_fy = 0.0;
  obs.timestamp = 10.0;
  const auto r = filter.fuse_flow(obs);
  CHECK(r.action == StepAction::applied);
  CHECK(filter.state().velocity.z() == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("flow below the altitude guard is dropped") {
  auto filter = make_filter();
  filter.set_state(hover_at({0.0, 0.0, 0.05}), diagonal_cov(1e-4, 1e-2, 1e-3, 1e-6));
  FlowObservation obs;
  obs.timestamp = 10.0;
  CHECK(filter.fuse_flow(obs).action == StepAction::dropped);
  CHECK(filter.diagnostics().flow.errored == 1);
}

TEST_CASE("laser conversion to altitude") {
  auto filter = make_filter();
  filter.set_state(hover_at({0.0, 0.0, 0.9}), diagonal_cov(1e-6, 1e-6, 1e-2, 1e-8));
  LaserObservation obs;
  obs.l = 0.9;
  obs.timestamp = 10.0;
  CHECK(filter.fuse_laser(obs).action == StepAction::applied);
  CHECK(filter.state().position.z() == doctest::Approx(0.9).epsilon(1e-12));

  // 60 deg roll estimate: the slant reading 1.8 m converts back to 0.9 m.
  StateEstimate rolled = hover_at({0.0, 0.0, 0.9});
  rolled.attitude = Quat(std::cos(M_PI / 6.0), std::sin(M_PI / 6.0), 0.0, 0.0);
  filter.set_state(rolled, diagonal_cov(1e-6, 1e-6, 1e-2, 1e-8));
  LaserObservation slant;
  slant.l = 1.8;
  slant.timestamp = 10.0;
  CHECK(filter.fuse_laser(slant).action == StepAction::applied);
  CHECK(filter.state().position.z() == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("laser beyond the tilt guard is dropped") {
  auto filter = make_filter();
  StateEstimate s = hover_at({0.0, 0.0, 0.9});
  s.attitude = Quat(std::sqrt(0.5), std::sqrt(0.5), 0.0, 0.0);  // 90 deg roll
  filter.set_state(s, diagonal_cov(1e-6, 1e-6, 1e-2, 1e-8));
  LaserObservation obs;
  obs.l = 2.0;
  obs.timestamp = 10.0;
  CHECK(filter.fuse_laser(obs).action == StepAction::dropped);
}

TEST_CASE("baro offset removal") {
  auto filter = make_filter();
  filter.set_state(hover_at({0.0, 0.0, 0.9}), diagonal_cov(1e-6, 1e-6, 1e-2, 1e-8));
  filter.set_baro_offset(100.0);
  BaroObservation obs;
  obs.b = 100.9;
  obs.timestamp = 10.0;
  CHECK(filter.fuse_baro(obs).action == StepAction::applied);
  CHECK(filter.state().position.z() == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("mag fusion examples") {
  auto filter = make_filter();
  const Vec3 m_ref = Vec3::UnitX();

  // Matching field: no correction.
  StateEstimate s = hover_at({1.0, 0.0, 0.9});
  filter.set_state(s, diagonal_cov(1e-2, 1e-4, 1e-4, 1e-6));
  MagObservation obs;
  obs.m = predict_mag(s, m_ref);
  obs.timestamp = 10.0;
  CHECK(filter.fuse_mag(obs).action == StepAction::applied);
  CHECK(quat_log(filter.state().attitude).norm() < 1e-12);

  // 10 deg yaw error shrinks strictly.
  StateEstimate yawed = hover_at({1.0, 0.0, 0.9});
  yawed.attitude = quat_exp({0.0, 0.0, 10.0 * M_PI / 180.0});
  filter.set_state(yawed, diagonal_cov(1e-2, 1e-4, 1e-4, 1e-6));
  MagObservation exact;
  exact.m = m_ref;  // field seen by a zero-yaw body
  exact.timestamp = 10.0;
  CHECK(filter.fuse_mag(exact).action == StepAction::applied);
  const double yaw_after = std::abs(quat_log(filter.state().attitude).z());
  CHECK(yaw_after < 10.0 * M_PI / 180.0);

  // Orthogonal field: innovation norm sqrt(2).
  StateEstimate quarter = hover_at({1.0, 0.0, 0.9});
  quarter.attitude = quat_exp({0.0, 0.0, M_PI / 2.0});
  const Vec3 innovation = m_ref - predict_mag(quarter, m_ref);
  CHECK(innovation.norm() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("accepted updates never increase the covariance trace") {
  auto filter = make_filter();
  Rng rng(61);
  filter.set_state(hover_at({1.5, -0.5, 0.9}), diagonal_cov(1e-2, 1e-2, 1e-2, 1e-4));

  double prev_trace = filter.covariance().trace();
  for (int i = 0; i < 200; ++i) {
    const double t = 10.0 + 0.01 * (i + 1);
    const int pick = i % 4;
    StepResult r{};
    if (pick == 0) {
      const double predicted = predict_range(
          filter.state(), Quat::Identity(), default_geometry().requesters[i % 4],
          default_geometry().responders[i % 2]);
      r = filter.fuse_range(
          range_obs(i % 4, i % 2, predicted + rng.gaussian(0.02), t));
    } else if (pick == 1) {
      FlowObservation obs;
      const auto f = predict_flow(filter.state());
      obs.v_fx = f.x() + rng.gaussian(0.05);
      obs.v_fy = f.y() + rng.gaussian(0.05);
      obs.timestamp = t;
      r = filter.fuse_flow(obs);
    } else if (pick == 2) {
      LaserObservation obs;
      obs.l = predict_laser(filter.state()) + rng.gaussian(0.02);
      obs.timestamp = t;
      r = filter.fuse_laser(obs);
    } else {
      MagObservation obs;
      obs.m = predict_mag(filter.state(), Vec3::UnitX()) + rng.gaussian_vec3(0.02);
      obs.timestamp = t;
      r = filter.fuse_mag(obs);
    }
    if (r.action == StepAction::applied) {
      CHECK(filter.covariance().trace() <= prev_trace + 1e-12);
    }
    prev_trace = filter.covariance().trace();
    CHECK(covariance_is_healthy(filter.covariance()));
  }
}

TEST_CASE("stale events are dropped and counted") {
  auto filter = make_filter();
  filter.set_state(hover_at({1.0, 0.0, 0.9}, 20.0), diagonal_cov(1e-2, 1e-2, 1e-2, 1e-4));
  filter.step(imu_event(20.01));

  BaroObservation obs;
  obs.b = 0.9;
  obs.timestamp = 19.9;  // 110 ms behind the IMU timeline
  const auto r = filter.step(make_event(obs));
  CHECK(r.action == StepAction::dropped);
  CHECK(filter.diagnostics().baro.errored == 1);
}

TEST_CASE("imu clock faults re-anchor without corrupting the state") {
  auto filter = make_filter();
  filter.set_state(hover_at({1.0, 0.0, 0.9}, 20.0), diagonal_cov(1e-2, 1e-2, 1e-2, 1e-4));
  const auto r = filter.step(imu_event(21.0));  // 1 s gap: beyond max dt
  CHECK(r.action == StepAction::errored);
  CHECK(filter.diagnostics().imu.errored == 1);
  // Timeline re-anchored: the next sample propagates normally.
  CHECK(filter.step(imu_event(21.01)).action == StepAction::applied);
}

TEST_CASE("fuse_range requires a target attitude") {
  auto filter = make_filter();
  filter.set_state(hover_at({1.0, 0.0, 0.9}), diagonal_cov(1e-2, 1e-2, 1e-2, 1e-4));
  CHECK_THROWS(filter.fuse_range(range_obs(0, 0, 2.0, 10.0, std::nullopt)));
  // Through the dispatcher the same event is counted, not thrown.
  const auto r = filter.step(make_event(range_obs(0, 0, 2.0, 10.0, std::nullopt)));
  CHECK(r.action == StepAction::errored);
}

TEST_CASE("initialization from a noise-free stationary stream") {
  ScenarioConfig cfg;
  cfg.sim_noise.set_all_zero();
  cfg.uwb.noise.sigma_range = 0.0;
  cfg.sim_noise.baro_offset = 132.0;

  const Vec3 q_true(1.2, -0.8, 0.9);
  const auto truth = [&](double) {
    KinematicTruth kt;
    kt.mav_position = q_true;
    return kt;
  };
  const auto events = synthesize_sensors(truth, cfg, 2.0);

  auto filter = RelativeEkf(cfg.make_geometry(), cfg.filter_noise, cfg.process_noise,
                            cfg.init);
  for (const auto& ev : events) {
    filter.step(ev);
  }
  REQUIRE(filter.initialized());
  CHECK((filter.state().position - q_true).norm() < 1e-3);
  CHECK(filter.state().velocity.norm() < 1e-12);
  // Level attitude from gravity, zero yaw from the aligned field.
  CHECK(quat_log(filter.state().attitude).norm() < 1e-9);
  CHECK(filter.baro_offset() == doctest::Approx(132.0).epsilon(1e-6));
}

TEST_CASE("initialize_from_buffer rejects an insufficient buffer") {
  auto filter = make_filter();
  CHECK_THROWS(filter.initialize_from_buffer());
  filter.step(imu_event(0.0));
  filter.step(imu_event(0.01));
  CHECK_THROWS(filter.initialize_from_buffer());
}

TEST_CASE("trilateration oracle: noise-free solve within a millimetre") {
  Rng rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 q(rng.gaussian(1.5), rng.gaussian(1.5), 0.5 + 1.5 * rng.uniform());
    const NodeGeometry g = default_geometry();
    std::vector<std::tuple<Vec3, Vec3, double>> pairs;
    for (const auto& a_i : g.requesters) {
      for (const auto& a_j : g.responders) {
        pairs.emplace_back(a_i, a_j, (q + a_i - a_j).norm());
      }
    }
    const Vec3 solved = trilaterate(pairs, {{0.0, 0.0, 1.0}});
    CHECK((solved - q).norm() < 1e-3);
  }
}

TEST_CASE("same-timestamp non-imu events commute to first order") {
  ScenarioConfig cfg;
  cfg.rates.laser_hz = 20.0;  // laser, baro and mag share sample times
  cfg.seed = 7;
  cfg.sim_noise.set_all_zero();  // innovations at consistency level
  cfg.uwb.noise.sigma_range = 0.0;

  const Vec3 q_true(1.0, -0.5, 0.9);
  const auto truth = [&](double) {
    KinematicTruth kt;
    kt.mav_position = q_true;
    return kt;
  };
  auto events = synthesize_sensors(truth, cfg, 8.0);

  const auto run = [&](const std::vector<SensorEvent>& stream) {
    auto filter = RelativeEkf(cfg.make_geometry(), cfg.filter_noise, cfg.process_noise,
                              cfg.init);
    for (const auto& ev : stream) filter.step(ev);
    REQUIRE(filter.initialized());
    return filter.state();
  };

  const StateEstimate a = run(events);

  // Reverse every run of equal-timestamp non-IMU events.
  auto permuted = events;
  std::size_t i = 0;
  while (i < permuted.size()) {
    std::size_t j = i;
    while (j < permuted.size() &&
           permuted[j].timestamp == permuted[i].timestamp &&
           !std::holds_alternative<ImuSample>(permuted[j].payload)) {
      ++j;
    }
    if (j - i >= 2) std::reverse(permuted.begin() + static_cast<long>(i),
                                 permuted.begin() + static_cast<long>(j));
    i = std::max(j, i + 1);
  }
  const StateEstimate b = run(permuted);

  CHECK(error_between(a, b).cwiseAbs().maxCoeff() < 1e-6);
}
