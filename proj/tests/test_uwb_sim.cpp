#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "relnav/rng.hpp"
#include "relnav/uwb_sim.hpp"

using namespace relnav;

namespace {

RangingTruth static_truth(const Vec3& rel_position) {
  RangingTruth t;
  t.mav_position = rel_position;
  return t;
}

}  // namespace

TEST_CASE("twtof arithmetic") {
  const double delta = 2e-4;
  CHECK(twtof_distance(0.0, delta, delta, 0.0) == doctest::Approx(0.0));
  CHECK(twtof_distance(0.0, delta + 2.0 / kSpeedOfLight, delta, 0.0) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK(twtof_distance(0.0, delta + 2.0 / kSpeedOfLight, delta, 0.3) ==
        doctest::Approx(0.7).epsilon(1e-9));
  CHECK_THROWS(twtof_distance(0.0, delta / 2.0, delta, 0.0));
}

TEST_CASE("synthesize/decode round trip is exact with matched bias") {
  Rng rng(51);
  Rng noise_rng(52);
  UwbNoiseConfig no_noise;
  no_noise.sigma_range = 0.0;
  RangingSchedule schedule = default_schedule();

  for (int i = 0; i < 10000; ++i) {
    NodeGeometry g = NodeGeometry::make({rng.gaussian_vec3(0.4)}, {rng.gaussian_vec3(0.4)});
    g.pair_bias(0, 0) = 0.3 * rng.uniform();  // cable delays only add distance
    RangingTruth truth;
    truth.mav_position = rng.gaussian_vec3(3.0);
    truth.mav_attitude = renormalize(quat_exp(rng.gaussian_vec3(0.5)));
    truth.target_position = rng.gaussian_vec3(1.0);
    truth.target_attitude = renormalize(quat_exp(rng.gaussian_vec3(0.5)));

    const Vec3 req_world =
        truth.mav_position + quat_to_dcm(truth.mav_attitude) * g.requesters[0];
    const Vec3 resp_world =
        truth.target_position + quat_to_dcm(truth.target_attitude) * g.responders[0];
    const double want = (req_world - resp_world).norm();

    const auto tx = synthesize_transaction(truth, 0, 0, g, schedule, no_noise, noise_rng);
    const double got = twtof_distance(tx.t1, tx.t2, tx.delta, g.bias(0, 0));
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("miscalibrated decode bias shifts the recovered distance") {
  Rng rng(53);
  UwbNoiseConfig no_noise;
  no_noise.sigma_range = 0.0;
  NodeGeometry g = NodeGeometry::make({Vec3::Zero()}, {Vec3::Zero()});
  g.pair_bias(0, 0) = 0.25;  // true cable delay
  const auto tx = synthesize_transaction(static_truth({3.0, 0.0, 0.0}), 0, 0, g,
                                         default_schedule(), no_noise, rng);
  CHECK(twtof_distance(tx.t1, tx.t2, tx.delta, 0.25) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(twtof_distance(tx.t1, tx.t2, tx.delta, 0.0) == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("range noise statistics") {
  Rng rng(54);
  UwbNoiseConfig noise;
  noise.sigma_range = 0.02;
  NodeGeometry g = NodeGeometry::make({Vec3::Zero()}, {Vec3::Zero()});
  const RangingTruth truth = static_truth({2.0, 1.0, 0.5});
  const double want = truth.mav_position.norm();

  double sum = 0.0, sum_sq = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto tx = synthesize_transaction(truth, 0, 0, g, default_schedule(), noise, rng);
    const double r = twtof_distance(tx.t1, tx.t2, tx.delta, 0.0) - want;
    sum += r;
    sum_sq += r * r;
  }
  const double mean = sum / n;
  const double std_dev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std_dev == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("default schedule is legal and covers all pairs") {
  const NodeGeometry g = default_geometry();
  g.validate();
  CHECK(g.yaw_observable());
  const RangingSchedule s = default_schedule();
  s.validate(g);
  CHECK(s.measurements_per_cycle() == 8);
  CHECK(s.step_period() == doctest::Approx(0.029));

  RangingSchedule bad = s;
  bad.steps[0] = {{0, 0}, {1, 1}};  // antennae 0 and 1 share radio 0
  CHECK_THROWS(bad.validate(g));

  RangingSchedule repeat = s;
  repeat.steps[3] = s.steps[0];  // pair repeated within the cycle
  CHECK_THROWS(repeat.validate(g));
}

TEST_CASE("run_schedule slot arithmetic over 1.16 s") {
  Rng rng(55);
  UwbNoiseConfig no_noise;
  no_noise.sigma_range = 0.0;
  const auto events =
      run_schedule([](double) { return static_truth({2.0, 0.0, -0.8}); },
                   default_geometry(), default_schedule(), no_noise, 1.16,
                   {10.0, 0.0, 0.0}, rng);

  int ranges = 0;
  std::map<std::pair<int, int>, int> per_pair;
  for (const auto& ev : events) {
    if (ev.range) {
      ranges++;
      per_pair[{ev.range->requester_id, ev.range->responder_id}]++;
    }
  }
  CHECK(ranges == 80);  // 10 full cycles, 8 measurements each
  CHECK(per_pair.size() == 8);
  for (const auto& [ids, count] : per_pair) {
    CHECK(count == 10);  // every pair exactly once per cycle
  }
}

TEST_CASE("payload cadence tracks the configured rate") {
  Rng rng(56);
  UwbNoiseConfig no_noise;
  no_noise.sigma_range = 0.0;
  const double duration = 60.0;
  const auto events =
      run_schedule([](double) { return static_truth({2.0, 0.0, -0.8}); },
                   default_geometry(), default_schedule(), no_noise, duration,
                   {10.0, 0.0, 0.0}, rng);

  std::vector<double> payload_times;
  for (const auto& ev : events) {
    if (ev.target_attitude_payload) payload_times.push_back(ev.timestamp);
  }
  const double rate = static_cast<double>(payload_times.size()) / duration;
  CHECK(rate > 9.5);
  CHECK(rate < 10.5);
  // At most one refresh per payload period.
  std::set<long> periods;
  for (double t : payload_times) {
    CHECK(periods.insert(std::lround(std::floor(t / 0.1))).second);
  }
}

TEST_CASE("observation timestamps strictly increase per radio") {
  Rng rng(57);
  UwbNoiseConfig no_noise;
  no_noise.sigma_range = 0.0;
  const auto events =
      run_schedule([](double) { return static_truth({1.0, 1.0, -0.5}); },
                   default_geometry(), default_schedule(), no_noise, 5.0,
                   {10.0, 0.0, 0.0}, rng);
  std::map<int, double> last_time;
  for (const auto& ev : events) {
    if (!ev.range) continue;
    const int radio = RangingSchedule::requester_radio(ev.range->requester_id);
    const auto it = last_time.find(radio);
    if (it != last_time.end()) {
      CHECK(ev.timestamp > it->second);
    }
    last_time[radio] = ev.timestamp;
  }
}

TEST_CASE("dropout removes the expected fraction of slots") {
  Rng rng(58);
  UwbNoiseConfig noise;
  noise.sigma_range = 0.0;
  noise.dropout_probability = 0.1;
  // 1250 cycles of 8 slots = 10^4 scheduled measurements.
  const double duration = 1250 * 0.116;
  const auto events =
      run_schedule([](double) { return static_truth({2.0, 0.0, -0.8}); },
                   default_geometry(), default_schedule(), noise, duration,
                   {10.0, 0.0, 0.0}, rng);
  int ranges = 0;
  for (const auto& ev : events) {
    if (ev.range) ranges++;
  }
  const int missing = 10000 - ranges;
  CHECK(missing > 900);
  CHECK(missing < 1100);
}

TEST_CASE("geometry validation") {
  CHECK_THROWS(NodeGeometry::make({}, {Vec3::Zero()}).validate());
  NodeGeometry g = default_geometry();
  g.pair_bias = Eigen::MatrixXd::Zero(2, 2);  // wrong shape
  CHECK_THROWS(g.validate());

  const NodeGeometry single = NodeGeometry::make({Vec3::Zero()}, {Vec3::Zero()});
  single.validate();
  CHECK_FALSE(single.yaw_observable());
  single_pair_schedule().validate(single);
}
