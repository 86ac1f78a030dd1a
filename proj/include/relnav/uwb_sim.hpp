#pragma once

#include <functional>
#include <vector>

#include "relnav/rng.hpp"
#include "relnav/sensor_models.hpp"
#include "relnav/types.hpp"

// Discrete-event simulation of the TWTOF ranging protocol: antenna
// switching schedule, round-trip clock arithmetic, per-pair cable bias,
// Gaussian noise, optional NLOS spikes and dropout, and the target
// orientation payload piggybacked on responses at its own cadence.

namespace relnav {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

/// Antenna layout: requester offsets in F_Q, responder offsets in F_M,
/// and the per-pair gross distance bias from cables and connectors.
struct NodeGeometry {
  std::vector<Vec3> requesters;
  std::vector<Vec3> responders;
  Eigen::MatrixXd pair_bias;  // m, [requester x responder]

  /// Zero-bias layout from explicit antenna offsets.
  static NodeGeometry make(std::vector<Vec3> requesters, std::vector<Vec3> responders);

  double bias(int requester_id, int responder_id) const;

  /// At least one antenna on each side, finite offsets, bias matrix shaped
  /// to the antenna counts. Throws std::invalid_argument otherwise.
  void validate() const;

  /// True when the layout can disambiguate yaw (>= 2 antennae per side).
  bool yaw_observable() const;
};

/// Paper-default layout: four requesters on the corners of a 0.55 m square
/// around the F_Q origin, two responders about 1 m apart on the target.
NodeGeometry default_geometry();

/// Antenna switching plan. Each step fires its pairs simultaneously; the
/// MAV has two radios (antennae 0,1 on radio 0; antennae 2,3 on radio 1)
/// and each responder is its own radio, so a legal step never reuses a
/// radio on either side.
struct RangingSchedule {
  std::vector<std::vector<std::pair<int, int>>> steps;
  double cycle_period = 0.116;    // s, one pass over all pairs
  double response_delay = 2e-4;   // s, delta in the TWTOF exchange

  double step_period() const { return cycle_period / static_cast<double>(steps.size()); }
  int measurements_per_cycle() const;

  static int requester_radio(int requester_id) { return requester_id / 2; }
  static int responder_radio(int responder_id) { return responder_id; }

  /// Every pair exactly once per cycle, no radio reuse inside a step.
  /// Throws std::invalid_argument on violations.
  void validate(const NodeGeometry& geometry) const;
};

/// Four steps of two simultaneous transactions covering all 8 pairs of the
/// default 4x2 layout over one 0.116 s cycle.
RangingSchedule default_schedule();

/// Single-pair degenerate schedule (one requester, one responder); used to
/// demonstrate yaw drift without antenna diversity.
RangingSchedule single_pair_schedule();

/// One TWTOF exchange on the requester's transaction-local clock.
struct TwtofTransaction {
  double t1 = 0.0;     // s, request transmitted
  double t2 = 0.0;     // s, response received
  double delta = 0.0;  // s, responder wait
  int requester_id = 0;
  int responder_id = 0;
};

/// d = c ((t2 - delta) - t1) / 2 - bias.
/// Throws std::domain_error on negative time of flight.
double twtof_distance(double t1, double t2, double delta, double bias);

/// World poses of both platforms at one instant.
struct RangingTruth {
  Vec3 mav_position = Vec3::Zero();     // F_E, relative to the target origin
  Quat mav_attitude = Quat::Identity();
  Vec3 target_position = Vec3::Zero();  // F_E
  Quat target_attitude = Quat::Identity();
};

struct UwbNoiseConfig {
  double sigma_range = 0.02;      // m
  double dropout_probability = 0.0;
  double nlos_probability = 0.0;  // uniform positive spike on top of noise
  double nlos_bias_max = 0.5;     // m
  // Residual per-pair calibration error: the decoder's bias table is off by
  // a constant drawn once per stream for every pair.
  double pair_bias_error_sigma = 0.0;  // m
};

/// Timestamps for one exchange such that twtof_distance recovers the true
/// inter-antenna distance plus noise plus the pair bias; decoding with the
/// matching bias cancels it exactly.
TwtofTransaction synthesize_transaction(const RangingTruth& truth,
                                        int requester_id, int responder_id,
                                        const NodeGeometry& geometry,
                                        const RangingSchedule& schedule,
                                        const UwbNoiseConfig& noise, Rng& rng);

/// One scheduled stream entry: either a range observation or a fresh
/// target-attitude payload carried by a response message.
struct RangingEvent {
  Timestamp timestamp = 0.0;
  std::optional<RangeObservation> range;
  std::optional<Quat> target_attitude_payload;
};

using TruthProvider = std::function<RangingTruth(double)>;

struct PayloadConfig {
  double rate_hz = 10.0;      // target orientation refresh cadence
  double att_sigma_xy = 0.0;  // rad, roll/pitch error of the relayed attitude
  double att_sigma_z = 0.0;   // rad, yaw error
};

/// Incremental scheduler: walks the slot grid of a RangingSchedule and
/// produces decoded observations (using the geometry's own bias table) and
/// target-attitude payload refreshes. Deterministic for a given rng stream.
class RangingStream {
 public:
  RangingStream(NodeGeometry geometry, RangingSchedule schedule,
                UwbNoiseConfig noise, PayloadConfig payload, Rng* rng);

  /// Emits every slot with time in [cursor, t_limit); truth is queried at
  /// the slot times. Call repeatedly with increasing t_limit.
  std::vector<RangingEvent> advance_until(double t_limit, const TruthProvider& truth);

  const NodeGeometry& geometry() const { return geometry_; }
  const RangingSchedule& schedule() const { return schedule_; }

 private:
  NodeGeometry geometry_;
  RangingSchedule schedule_;
  UwbNoiseConfig noise_;
  PayloadConfig payload_;
  Rng* rng_;
  Eigen::MatrixXd pair_bias_error_;
  long slot_ = 0;
  double next_payload_time_ = 0.0;
  bool payload_pending_ = false;
  std::optional<Quat> held_payload_;
};

/// Runs the switching schedule over [0, duration); convenience wrapper
/// around RangingStream for batch generation.
std::vector<RangingEvent> run_schedule(const TruthProvider& truth,
                                       const NodeGeometry& geometry,
                                       const RangingSchedule& schedule,
                                       const UwbNoiseConfig& noise,
                                       double duration, const PayloadConfig& payload,
                                       Rng& rng);

}  // namespace relnav
