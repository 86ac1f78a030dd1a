#include "relnav/uwb_sim.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace relnav {

NodeGeometry NodeGeometry::make(std::vector<Vec3> requesters, std::vector<Vec3> responders) {
  NodeGeometry g;
  g.requesters = std::move(requesters);
  g.responders = std::move(responders);
  g.pair_bias = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.requesters.size()),
                                      static_cast<Eigen::Index>(g.responders.size()));
  return g;
}

double NodeGeometry::bias(int requester_id, int responder_id) const {
  return pair_bias(requester_id, responder_id);
}

void NodeGeometry::validate() const {
  if (requesters.empty() || responders.empty()) {
    throw std::invalid_argument("NodeGeometry: need at least one antenna per side");
  }
  for (const auto& a : requesters) {
    if (!a.allFinite()) throw std::invalid_argument("NodeGeometry: non-finite requester offset");
  }
  for (const auto& a : responders) {
    if (!a.allFinite()) throw std::invalid_argument("NodeGeometry: non-finite responder offset");
  }
  if (pair_bias.rows() != static_cast<Eigen::Index>(requesters.size()) ||
      pair_bias.cols() != static_cast<Eigen::Index>(responders.size())) {
    throw std::invalid_argument("NodeGeometry: bias table shape mismatch");
  }
}

bool NodeGeometry::yaw_observable() const {
  return requesters.size() >= 2 && responders.size() >= 2;
}

NodeGeometry default_geometry() {
  const double h = 0.55 / 2.0;
  return NodeGeometry::make(
      {{h, h, 0.0}, {-h, h, 0.0}, {-h, -h, 0.0}, {h, -h, 0.0}},
      // Responder masts measured on the target platform, ~1 m apart.
      {{0.04, -0.57, 1.753}, {0.035, 0.424, 1.778}});
}

int RangingSchedule::measurements_per_cycle() const {
  int n = 0;
  for (const auto& step : steps) n += static_cast<int>(step.size());
  return n;
}

void RangingSchedule::validate(const NodeGeometry& geometry) const {
  if (steps.empty() || cycle_period <= 0.0 || response_delay <= 0.0) {
    throw std::invalid_argument("RangingSchedule: empty or non-positive timing");
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& step : steps) {
    std::set<int> req_radios;
    std::set<int> resp_radios;
    for (const auto& [i, j] : step) {
      if (i < 0 || i >= static_cast<int>(geometry.requesters.size()) ||
          j < 0 || j >= static_cast<int>(geometry.responders.size())) {
        throw std::invalid_argument("RangingSchedule: pair id out of range");
      }
      if (!req_radios.insert(requester_radio(i)).second ||
          !resp_radios.insert(responder_radio(j)).second) {
        throw std::invalid_argument("RangingSchedule: radio used twice in one step");
      }
      if (!seen.insert({i, j}).second) {
        throw std::invalid_argument("RangingSchedule: pair repeated within cycle");
      }
    }
  }
}

RangingSchedule default_schedule() {
  RangingSchedule s;
  s.steps = {{{0, 0}, {2, 1}}, {{1, 1}, {3, 0}}, {{0, 1}, {2, 0}}, {{1, 0}, {3, 1}}};
  return s;
}

RangingSchedule single_pair_schedule() {
  RangingSchedule s;
  s.steps = {{{0, 0}}};
  s.cycle_period = 0.029;  // one transaction per step slot
  return s;
}

double twtof_distance(double t1, double t2, double delta, double bias) {
  const double flight = (t2 - delta) - t1;
  if (flight < 0.0) {
    throw std::domain_error("twtof_distance: negative time of flight");
  }
  return kSpeedOfLight * flight / 2.0 - bias;
}

namespace {

double true_pair_distance(const RangingTruth& truth, const NodeGeometry& geometry,
                          int requester_id, int responder_id) {
  const Vec3 req_world =
      truth.mav_position + quat_to_dcm(truth.mav_attitude) * geometry.requesters[requester_id];
  const Vec3 resp_world =
      truth.target_position + quat_to_dcm(truth.target_attitude) * geometry.responders[responder_id];
  return (req_world - resp_world).norm();
}

}  // namespace

TwtofTransaction synthesize_transaction(const RangingTruth& truth,
                                        int requester_id, int responder_id,
                                        const NodeGeometry& geometry,
                                        const RangingSchedule& schedule,
                                        const UwbNoiseConfig& noise, Rng& rng) {
  double d = true_pair_distance(truth, geometry, requester_id, responder_id);
  if (noise.sigma_range > 0.0) {
    d += rng.gaussian(noise.sigma_range);
  }
  if (noise.nlos_probability > 0.0 && rng.bernoulli(noise.nlos_probability)) {
    d += rng.uniform() * noise.nlos_bias_max;
  }
  // The radio cannot report a round trip shorter than the response wait.
  d = std::max(d + geometry.bias(requester_id, responder_id), 0.0);

  // Transaction-local clock anchored at the response arrival: t2 lands
  // exactly on delta, so Eq.-of-motion arithmetic in twtof_distance incurs
  // no rounding at the (large) delta scale and the round trip is exact.
  TwtofTransaction tx;
  tx.delta = schedule.response_delay;
  tx.t1 = -2.0 * d / kSpeedOfLight;
  tx.t2 = schedule.response_delay;
  tx.requester_id = requester_id;
  tx.responder_id = responder_id;
  return tx;
}

RangingStream::RangingStream(NodeGeometry geometry, RangingSchedule schedule,
                             UwbNoiseConfig noise, PayloadConfig payload, Rng* rng)
    : geometry_(std::move(geometry)),
      schedule_(std::move(schedule)),
      noise_(noise),
      payload_(payload),
      rng_(rng),
      payload_pending_(payload.rate_hz > 0.0) {
  geometry_.validate();
  schedule_.validate(geometry_);
  pair_bias_error_ = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(geometry_.requesters.size()),
      static_cast<Eigen::Index>(geometry_.responders.size()));
  if (noise_.pair_bias_error_sigma > 0.0) {
    for (Eigen::Index i = 0; i < pair_bias_error_.rows(); ++i) {
      for (Eigen::Index j = 0; j < pair_bias_error_.cols(); ++j) {
        pair_bias_error_(i, j) = rng_->gaussian(noise_.pair_bias_error_sigma);
      }
    }
  }
}

std::vector<RangingEvent> RangingStream::advance_until(double t_limit,
                                                       const TruthProvider& truth) {
  std::vector<RangingEvent> events;
  const double step_period = schedule_.step_period();
  const int steps_per_cycle = static_cast<int>(schedule_.steps.size());
  const double payload_period = payload_.rate_hz > 0.0 ? 1.0 / payload_.rate_hz : -1.0;

  for (;; ++slot_) {
    const double t = static_cast<double>(slot_ / steps_per_cycle) * schedule_.cycle_period +
                     static_cast<double>(slot_ % steps_per_cycle) * step_period;
    if (t >= t_limit - 1e-12) break;

    const RangingTruth poses = truth(t);
    if (payload_.rate_hz > 0.0 && t >= next_payload_time_) {
      payload_pending_ = true;
      // One refresh per payload period, relayed by the next response.
      while (next_payload_time_ <= t) next_payload_time_ += payload_period;
    }

    bool first_in_slot = true;
    for (const auto& [i, j] : schedule_.steps[static_cast<std::size_t>(slot_ % steps_per_cycle)]) {
      if (noise_.dropout_probability > 0.0 && rng_->bernoulli(noise_.dropout_probability)) {
        continue;
      }
      const TwtofTransaction tx =
          synthesize_transaction(poses, i, j, geometry_, schedule_, noise_, *rng_);

      RangingEvent ev;
      ev.timestamp = t;
      RangeObservation obs;
      obs.requester_id = i;
      obs.responder_id = j;
      obs.distance = twtof_distance(tx.t1, tx.t2, tx.delta,
                                    geometry_.bias(i, j) - pair_bias_error_(i, j));
      obs.timestamp = t;
      if (payload_pending_ && first_in_slot) {
        Vec3 att_noise = Vec3::Zero();
        if (payload_.att_sigma_xy > 0.0 || payload_.att_sigma_z > 0.0) {
          att_noise = Vec3(rng_->gaussian(payload_.att_sigma_xy),
                           rng_->gaussian(payload_.att_sigma_xy),
                           rng_->gaussian(payload_.att_sigma_z));
        }
        held_payload_ = renormalize(poses.target_attitude * quat_exp(att_noise));
        obs.target_attitude = held_payload_;
        ev.target_attitude_payload = held_payload_;
        payload_pending_ = false;
      } else if (held_payload_) {
        obs.target_attitude = held_payload_;
      }
      ev.range = obs;
      events.push_back(ev);
      first_in_slot = false;
    }
  }
  return events;
}

std::vector<RangingEvent> run_schedule(const TruthProvider& truth,
                                       const NodeGeometry& geometry,
                                       const RangingSchedule& schedule,
                                       const UwbNoiseConfig& noise,
                                       double duration, const PayloadConfig& payload,
                                       Rng& rng) {
  RangingStream stream(geometry, schedule, noise, payload, &rng);
  return stream.advance_until(duration, truth);
}

}  // namespace relnav
