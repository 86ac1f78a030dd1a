#include "relnav/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relnav/config.hpp"

namespace relnav {

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::static_square: return "static_square";
    case ScenarioKind::far_anchor: return "far_anchor";
    case ScenarioKind::translating_target: return "translating_target";
    case ScenarioKind::rotating_target: return "rotating_target";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  if (name == "static_square") return ScenarioKind::static_square;
  if (name == "far_anchor") return ScenarioKind::far_anchor;
  if (name == "translating_target") return ScenarioKind::translating_target;
  if (name == "rotating_target") return ScenarioKind::rotating_target;
  throw ConfigError("unknown scenario kind '" + name + "'");
}

void SimNoiseConfig::set_all_zero() {
  gyro_noise_density = 0.0;
  accel_noise_density = 0.0;
  gyro_bias_walk = 0.0;
  gyro_bias_init = 0.0;
  accel_bias_sigma = 0.0;
  sigma_flow = 0.0;
  sigma_laser = 0.0;
  laser_bias_sigma = 0.0;
  sigma_baro = 0.0;
  sigma_mag = 0.0;
  payload_att_sigma_xy = 0.0;
  payload_att_sigma_z = 0.0;
  pair_bias_error = 0.0;
}

ScenarioConfig ScenarioConfig::defaults_for(ScenarioKind kind) {
  ScenarioConfig cfg;
  cfg.kind = kind;
  switch (kind) {
    case ScenarioKind::static_square:
      break;
    case ScenarioKind::far_anchor:
      cfg.altitude = 0.6;
      // Responder masts as measured when the platform was parked ~3.5 m
      // away in y; the flight square is displaced instead so ranges reach
      // up to ~5 m while the mast offsets stay local to the target IMU.
      cfg.uwb.responders = {{0.497, 0.0065, 1.733}, {-0.497, -0.0065, 1.77}};
      cfg.path_center = {0.128, -2.4675, 0.0};
      break;
    case ScenarioKind::translating_target:
      cfg.relative_setpoint = {0.0, -1.5, 0.9};
      break;
    case ScenarioKind::rotating_target:
      cfg.relative_setpoint = {0.0, -2.0, 0.75};
      break;
  }
  return cfg;
}

NodeGeometry ScenarioConfig::make_geometry() const {
  const double h = uwb.requester_square / 2.0;
  std::vector<Vec3> requesters = {
      {h, h, 0.0}, {-h, h, 0.0}, {-h, -h, 0.0}, {h, -h, 0.0}};
  std::vector<Vec3> responders = uwb.responders;
  if (uwb.single_pair) {
    requesters.resize(1);
    responders.resize(1);
  }
  NodeGeometry g = NodeGeometry::make(std::move(requesters), std::move(responders));
  g.pair_bias.setConstant(uwb.pair_bias);
  return g;
}

RangingSchedule ScenarioConfig::make_schedule() const {
  RangingSchedule s = uwb.single_pair ? single_pair_schedule() : default_schedule();
  // The single-pair layout keeps the per-slot cadence of the full schedule.
  s.cycle_period = uwb.single_pair ? uwb.cycle_period / 4.0 : uwb.cycle_period;
  s.response_delay = uwb.response_delay;
  return s;
}

void ScenarioConfig::validate() const {
  if (duration <= 0.0) throw ConfigError("duration must be positive");
  if (rates.imu_hz <= 0.0 || rates.control_hz <= 0.0 || rates.payload_hz <= 0.0) {
    throw ConfigError("imu_hz, control_hz and payload_hz must be positive");
  }
  if (rates.flow_hz < 0.0 || rates.laser_hz < 0.0 || rates.baro_hz < 0.0 ||
      rates.mag_hz < 0.0) {
    throw ConfigError("sensor rates must be non-negative");
  }
  const double ratio = rates.imu_hz / rates.control_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0) {
    throw ConfigError("imu_hz must be an integer multiple of control_hz");
  }
  if (altitude <= kFlowAltitudeGuard) throw ConfigError("altitude too low for flow");
  if (uwb.cycle_period <= 0.0 || uwb.response_delay <= 0.0) {
    throw ConfigError("uwb timing must be positive");
  }
  if (init_hold < init.min_stationary_span + uwb.cycle_period + 0.1) {
    throw ConfigError("init_hold too short to buffer the stationary span and one cycle");
  }
  const NodeGeometry g = make_geometry();
  g.validate();
  if (!uwb.single_pair && !g.yaw_observable()) {
    throw ConfigError("geometry cannot disambiguate yaw; set single_pair for the demo layout");
  }
  make_schedule().validate(g);
}

Quat TargetState::attitude() const {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

// ---------------------------------------------------------------------------
// Waypoint path with trapezoidal speed profile
// ---------------------------------------------------------------------------

WaypointPath::WaypointPath(std::vector<Vec3> waypoints, double speed, double accel,
                           double dwell, bool loop)
    : loop_(loop) {
  if (waypoints.size() < 2 || speed <= 0.0 || accel <= 0.0 || dwell < 0.0) {
    throw std::invalid_argument("WaypointPath: bad parameters");
  }
  const std::size_t edges = loop ? waypoints.size() : waypoints.size() - 1;
  double t = 0.0;
  for (std::size_t i = 0; i < edges; ++i) {
    Segment seg;
    seg.from = waypoints[i];
    seg.to = waypoints[(i + 1) % waypoints.size()];
    seg.dwell = dwell;
    const double length = (seg.to - seg.from).norm();
    const double ramp_dist = speed * speed / (2.0 * accel);
    if (length > 2.0 * ramp_dist) {
      seg.move_time = 2.0 * speed / accel + (length - 2.0 * ramp_dist) / speed;
    } else {
      seg.move_time = 2.0 * std::sqrt(length / accel);
    }
    seg.start_time = t;
    t += seg.dwell + seg.move_time;
    segments_.push_back(seg);
  }
  total_time_ = t;
  speed_ = speed;
  accel_ = accel;
}

ReferenceSample WaypointPath::sample(double t) const {
  if (loop_) {
    t = std::fmod(t, total_time_);
    if (t < 0.0) t += total_time_;
  } else if (t >= total_time_) {
    return {segments_.back().to, Vec3::Zero()};
  }
  if (t < 0.0) return {segments_.front().from, Vec3::Zero()};

  const Segment* seg = &segments_.back();
  for (const auto& s : segments_) {
    if (t < s.start_time + s.dwell + s.move_time) {
      seg = &s;
      break;
    }
  }
  const double local = t - seg->start_time;
  if (local <= seg->dwell) {
    return {seg->from, Vec3::Zero()};
  }
  const double tau = local - seg->dwell;
  const double length = (seg->to - seg->from).norm();
  if (length < 1e-12) return {seg->from, Vec3::Zero()};
  const Vec3 dir = (seg->to - seg->from) / length;

  const double ramp_dist = speed_ * speed_ / (2.0 * accel_);
  double s = 0.0;
  double v = 0.0;
  if (length > 2.0 * ramp_dist) {
    const double t_ramp = speed_ / accel_;
    const double t_cruise = (length - 2.0 * ramp_dist) / speed_;
    if (tau < t_ramp) {
      v = accel_ * tau;
      s = 0.5 * accel_ * tau * tau;
    } else if (tau < t_ramp + t_cruise) {
      v = speed_;
      s = ramp_dist + speed_ * (tau - t_ramp);
    } else {
      const double td = std::min(tau - t_ramp - t_cruise, t_ramp);
      v = speed_ - accel_ * td;
      s = ramp_dist + speed_ * t_cruise + speed_ * td - 0.5 * accel_ * td * td;
    }
  } else {
    const double t_peak = std::sqrt(length / accel_);
    if (tau < t_peak) {
      v = accel_ * tau;
      s = 0.5 * accel_ * tau * tau;
    } else {
      const double td = std::min(tau - t_peak, t_peak);
      v = accel_ * t_peak - accel_ * td;
      s = 0.5 * length + accel_ * t_peak * td - 0.5 * accel_ * td * td;
    }
  }
  s = std::min(s, length);
  return {seg->from + s * dir, v * dir};
}

// ---------------------------------------------------------------------------
// Trajectory provider
// ---------------------------------------------------------------------------

namespace {

Vec3 rotate_z(double yaw, const Vec3& v) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

std::vector<Vec3> square_waypoints(double side, double altitude, double yaw,
                                   const Vec3& center) {
  const double h = side / 2.0;
  std::vector<Vec3> pts = {
      {h, h, 0.0}, {-h, h, 0.0}, {-h, -h, 0.0}, {h, -h, 0.0}};
  for (auto& p : pts) p = rotate_z(yaw, p) + Vec3(center.x(), center.y(), altitude);
  return pts;
}

constexpr double kPathAccel = 0.5;  // m/s^2 along reference edges

}  // namespace

TrajectoryProvider::TrajectoryProvider(const ScenarioConfig& config) : config_(config) {
  switch (config.kind) {
    case ScenarioKind::static_square:
      mav_path_.emplace(square_waypoints(config.square_side, config.altitude, 0.0,
                                         config.path_center),
                        config.square_speed, kPathAccel, config.corner_dwell, true);
      break;
    case ScenarioKind::far_anchor: {
      // Path variants distinguish the far-anchor runs: scaled and rotated
      // squares, all far from the responders.
      const int idx = std::clamp(config.trajectory_index, 1, 5);
      const double scales[] = {1.0, 0.75, 1.0, 0.85, 0.9};
      const double yaws[] = {0.0, 0.0, M_PI / 4.0, M_PI / 6.0, M_PI / 12.0};
      mav_path_.emplace(square_waypoints(config.square_side * scales[idx - 1],
                                         config.altitude, yaws[idx - 1],
                                         config.path_center),
                        config.square_speed, kPathAccel, config.corner_dwell, true);
      break;
    }
    case ScenarioKind::translating_target: {
      // Planar course with long legs driven at the configured speed.
      std::vector<Vec3> course = {
          {0.0, 0.0, 0.0}, {5.0, 0.0, 0.0}, {5.0, 2.5, 0.0}, {0.0, 2.5, 0.0}};
      target_path_.emplace(std::move(course), config.target_speed, 0.2, 0.0, true);
      break;
    }
    case ScenarioKind::rotating_target:
      heading_relative_ = true;
      break;
  }
}

ReferenceSample TrajectoryProvider::reference(double t, double target_yaw) const {
  switch (config_.kind) {
    case ScenarioKind::static_square:
    case ScenarioKind::far_anchor:
      return mav_path_->sample(t);
    case ScenarioKind::translating_target:
      return {config_.relative_setpoint, Vec3::Zero()};
    case ScenarioKind::rotating_target:
      // Setpoint rule: hold station behind the target's heading.
      return {rotate_z(target_yaw, config_.relative_setpoint), Vec3::Zero()};
  }
  return {};
}

TargetState TrajectoryProvider::target(double t) const {
  TargetState state;
  switch (config_.kind) {
    case ScenarioKind::static_square:
    case ScenarioKind::far_anchor:
      break;
    case ScenarioKind::translating_target: {
      const ReferenceSample s = target_path_->sample(std::max(t, 0.0));
      state.position = s.setpoint;
      state.velocity = s.velocity_ff;
      break;
    }
    case ScenarioKind::rotating_target: {
      // Smooth spin-up over the first seconds, constant rate afterwards.
      constexpr double ramp = 3.0;
      const double w = config_.target_yaw_rate;
      const double tt = std::max(t, 0.0);
      if (tt < ramp) {
        state.yaw = 0.5 * w * tt * tt / ramp;
        state.yaw_rate = w * tt / ramp;
      } else {
        state.yaw = w * (tt - 0.5 * ramp);
        state.yaw_rate = w;
      }
      break;
    }
  }
  return state;
}

Vec3 TrajectoryProvider::initial_setpoint() const {
  return reference(0.0, target(0.0).yaw).setpoint;
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

Vec3 position_control_command(const Vec3& est_position, const Vec3& est_velocity,
                              const ReferenceSample& reference,
                              const ControllerConfig& gains) {
  Vec3 accel = gains.kp * (reference.setpoint - est_position) +
               gains.kd * (reference.velocity_ff - est_velocity);
  const double norm = accel.norm();
  if (norm > gains.accel_max) {
    accel *= gains.accel_max / norm;
  }
  return accel;
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

namespace {

struct VehicleTruth {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat attitude = Quat::Identity();
};

/// Attitude lag + thrust mapping: one IMU window of truth evolution with
/// piecewise-constant body rate and specific force (so a perfect strapdown
/// integration of the emitted IMU reproduces the truth exactly).
struct WindowKinematics {
  Vec3 omega_body = Vec3::Zero();
  Vec3 accel_body = Vec3::Zero();  // specific force
};

WindowKinematics plan_window(const VehicleTruth& veh, const Vec3& accel_cmd,
                             const ControllerConfig& gains) {
  Vec3 f_des = accel_cmd + gravity_vector();
  f_des.z() = std::max(f_des.z(), 0.3 * kGravityMagnitude);
  const double xy_max = f_des.z() * std::tan(gains.tilt_max);
  const double xy = f_des.head<2>().norm();
  if (xy > xy_max) {
    f_des.head<2>() *= xy_max / xy;
  }
  const Quat desired = Quat::FromTwoVectors(Vec3::UnitZ(), f_des.normalized());

  WindowKinematics w;
  w.omega_body = quat_log(veh.attitude.conjugate() * desired) / gains.attitude_tau;
  const double rate = w.omega_body.norm();
  if (rate > gains.omega_max) {
    w.omega_body *= gains.omega_max / rate;
  }
  w.accel_body = Vec3(0.0, 0.0, f_des.norm());
  return w;
}

VehicleTruth integrate_window(const VehicleTruth& veh, const WindowKinematics& w,
                              double dt) {
  VehicleTruth next;
  next.attitude = renormalize(veh.attitude * quat_exp(w.omega_body * dt));
  const Mat3 r0 = veh.attitude.toRotationMatrix();
  const Mat3 r1 = next.attitude.toRotationMatrix();
  next.velocity =
      veh.velocity + (0.5 * (r0 + r1) * w.accel_body - gravity_vector()) * dt;
  next.position = veh.position + 0.5 * (veh.velocity + next.velocity) * dt;
  return next;
}

/// Truth at an offset inside the current window, consistent with the
/// window's discrete integration rule.
VehicleTruth truth_at(const VehicleTruth& veh, const WindowKinematics& w, double tau) {
  if (tau <= 0.0) return veh;
  return integrate_window(veh, w, tau);
}

double quat_yaw(const Quat& q) {
  return std::atan2(2.0 * (q.w() * q.z() + q.x() * q.y()),
                    1.0 - 2.0 * (q.y() * q.y() + q.z() * q.z()));
}

struct StreamCursor {
  double rate = 0.0;
  long k = 1;
  double next() const { return static_cast<double>(k) / rate; }
};

}  // namespace

RunResult run_closed_loop(const ScenarioConfig& config, const RunHooks& hooks) {
  config.validate();

  const NodeGeometry geometry = config.make_geometry();
  const RangingSchedule schedule = config.make_schedule();
  const TrajectoryProvider trajectory(config);

  Rng rng_bias(derive_seed(config.seed, 0));
  Rng rng_imu(derive_seed(config.seed, 1));
  Rng rng_flow(derive_seed(config.seed, 2));
  Rng rng_laser(derive_seed(config.seed, 3));
  Rng rng_baro(derive_seed(config.seed, 4));
  Rng rng_mag(derive_seed(config.seed, 5));
  Rng rng_uwb(derive_seed(config.seed, 6));

  const SimNoiseConfig& sn = config.sim_noise;
  Vec3 gyro_bias = rng_bias.gaussian_vec3(sn.gyro_bias_init);
  const Vec3 accel_bias = rng_bias.gaussian_vec3(sn.accel_bias_sigma);
  const double laser_bias = rng_bias.gaussian(sn.laser_bias_sigma);

  RelativeEkf filter(geometry, config.filter_noise, config.process_noise, config.init);
  UwbNoiseConfig uwb_noise = config.uwb.noise;
  uwb_noise.pair_bias_error_sigma = sn.pair_bias_error;
  RangingStream uwb(geometry, schedule, uwb_noise,
                    {config.rates.payload_hz, sn.payload_att_sigma_xy, sn.payload_att_sigma_z},
                    &rng_uwb);

  const double dt = 1.0 / config.rates.imu_hz;
  const long control_every =
      static_cast<long>(std::llround(config.rates.imu_hz / config.rates.control_hz));
  const double total_duration = config.init_hold + config.duration;
  const long n_windows = static_cast<long>(std::llround(total_duration * config.rates.imu_hz));

  const Vec3 m_ref = config.init.mag_reference;
  const double noise_gyro = sn.gyro_noise_density / std::sqrt(dt);
  const double noise_accel = sn.accel_noise_density / std::sqrt(dt);

  TargetState target0 = trajectory.target(0.0);
  VehicleTruth vehicle;
  vehicle.position = target0.position + trajectory.initial_setpoint();

  RunResult result;
  Vec3 accel_cmd = Vec3::Zero();
  StreamCursor flow_cursor{config.rates.flow_hz};
  StreamCursor laser_cursor{config.rates.laser_hz};
  StreamCursor baro_cursor{config.rates.baro_hz};
  StreamCursor mag_cursor{config.rates.mag_hz};

  std::uint64_t range_events = 0;
  std::uint64_t payload_events = 0;

  std::vector<std::pair<int, SensorEvent>> window_events;  // (priority, event)

  for (long k = 0; k < n_windows && !result.aborted; ++k) {
    const double t0 = static_cast<double>(k) * dt;
    const double t1 = static_cast<double>(k + 1) * dt;
    const bool parked = t0 < config.init_hold;
    const double flight_t0 = std::max(0.0, t0 - config.init_hold);

    // Control tick: command from the estimate, never from truth.
    if (k % control_every == 0) {
      if (!parked && filter.initialized()) {
        const double target_yaw = filter.held_target_attitude()
                                      ? quat_yaw(*filter.held_target_attitude())
                                      : 0.0;
        const ReferenceSample ref = trajectory.reference(flight_t0, target_yaw);
        accel_cmd = position_control_command(filter.state().position,
                                             filter.state().velocity, ref,
                                             config.controller);
      } else {
        accel_cmd = Vec3::Zero();
      }

      if (filter.initialized()) {
        const TargetState tgt = trajectory.target(flight_t0);
        TraceRecord rec;
        rec.timestamp = t0;
        rec.truth_position = vehicle.position - tgt.position + hooks.trace_truth_offset;
        rec.estimated_position = filter.state().position;
        rec.estimated_velocity = filter.state().velocity;
        rec.estimated_attitude = filter.state().attitude;
        rec.covariance_diagonal = filter.covariance().diagonal();
        rec.accepted = filter.diagnostics().total_accepted();
        rec.gated = filter.diagnostics().total_gated();
        rec.dropped = filter.diagnostics().total_errored();
        result.trace.push_back(rec);

        const Vec3 err = filter.state().position - (vehicle.position - tgt.position);
        if (err.norm() > 5.0) {
          result.aborted = true;
          result.abort_reason = "estimator divergence: relative error above 5 m";
          break;
        }
      }
    }

    // One window of truth. Parked: exact hover on the start pose.
    WindowKinematics window;
    if (parked) {
      window.omega_body = Vec3::Zero();
      window.accel_body = Vec3(0.0, 0.0, kGravityMagnitude);
    } else {
      window = plan_window(vehicle, accel_cmd, config.controller);
    }

    const auto mav_truth_at = [&](double t_abs) {
      return truth_at(vehicle, window, t_abs - t0);
    };
    const auto target_truth_at = [&](double t_abs) {
      return trajectory.target(std::max(0.0, t_abs - config.init_hold));
    };

    window_events.clear();

    // IMU sample covering this window, stamped at the window end.
    {
      ImuSample imu;
      imu.timestamp = t1;
      imu.omega = window.omega_body + gyro_bias + rng_imu.gaussian_vec3(noise_gyro);
      imu.accel = window.accel_body + accel_bias + rng_imu.gaussian_vec3(noise_accel);
      window_events.push_back({0, make_event(imu)});
      gyro_bias += rng_imu.gaussian_vec3(sn.gyro_bias_walk * std::sqrt(dt));
    }

    const auto in_window = [&](double s) { return s > t0 && s <= t1 + 1e-9; };

    if (config.rates.flow_hz > 0.0) {
      while (in_window(flow_cursor.next())) {
        const double s = flow_cursor.next();
        const VehicleTruth mav = mav_truth_at(s);
        const TargetState tgt = target_truth_at(s);
        const double q_z = mav.position.z() - tgt.position.z();
        if (q_z >= kFlowAltitudeGuard) {
          const Vec3 v_rel = mav.velocity - tgt.velocity;
          const Vec3 body = mav.attitude.toRotationMatrix().transpose() * v_rel;
          FlowObservation obs;
          obs.v_fx = body.x() / q_z + rng_flow.gaussian(sn.sigma_flow);
          obs.v_fy = body.y() / q_z + rng_flow.gaussian(sn.sigma_flow);
          obs.timestamp = s;
          window_events.push_back({1, make_event(obs)});
        }
        flow_cursor.k++;
      }
    }

    if (config.rates.laser_hz > 0.0) {
      while (in_window(laser_cursor.next())) {
        const double s = laser_cursor.next();
        const VehicleTruth mav = mav_truth_at(s);
        const double c = tilt_cosine(mav.attitude);
        if (c > kLaserTiltGuard) {
          LaserObservation obs;
          obs.l = mav.position.z() / c + laser_bias + rng_laser.gaussian(sn.sigma_laser);
          obs.timestamp = s;
          if (obs.l > 0.0) {
            window_events.push_back({1, make_event(obs)});
          }
        }
        laser_cursor.k++;
      }
    }

    if (config.rates.baro_hz > 0.0) {
      while (in_window(baro_cursor.next())) {
        const double s = baro_cursor.next();
        const VehicleTruth mav = mav_truth_at(s);
        BaroObservation obs;
        obs.b = mav.position.z() + sn.baro_offset + rng_baro.gaussian(sn.sigma_baro);
        obs.timestamp = s;
        window_events.push_back({1, make_event(obs)});
        baro_cursor.k++;
      }
    }

    if (config.rates.mag_hz > 0.0) {
      while (in_window(mag_cursor.next())) {
        const double s = mag_cursor.next();
        const VehicleTruth mav = mav_truth_at(s);
        MagObservation obs;
        const Vec3 field = mav.attitude.toRotationMatrix().transpose() * m_ref +
                           rng_mag.gaussian_vec3(sn.sigma_mag);
        obs.m = field.normalized();
        obs.timestamp = s;
        window_events.push_back({1, make_event(obs)});
        mag_cursor.k++;
      }
    }

    {
      const auto ranging_truth = [&](double t_abs) {
        RangingTruth rt;
        const VehicleTruth mav = mav_truth_at(t_abs);
        const TargetState tgt = target_truth_at(t_abs);
        rt.mav_position = mav.position;
        rt.mav_attitude = mav.attitude;
        rt.target_position = tgt.position;
        rt.target_attitude = tgt.attitude();
        return rt;
      };
      for (const auto& ev : uwb.advance_until(t1 + 1e-9, ranging_truth)) {
        if (ev.target_attitude_payload) {
          TargetAttitude payload;
          payload.attitude = *ev.target_attitude_payload;
          payload.timestamp = ev.timestamp;
          window_events.push_back({1, make_event(payload)});
          payload_events++;
        }
        if (ev.range) {
          window_events.push_back({1, make_event(*ev.range)});
          range_events++;
        }
      }
    }

    std::stable_sort(window_events.begin(), window_events.end(),
                     [](const auto& a, const auto& b) {
                       if (a.second.timestamp != b.second.timestamp) {
                         return a.second.timestamp < b.second.timestamp;
                       }
                       return a.first < b.first;
                     });

    for (const auto& [priority, event] : window_events) {
      const StepResult step = filter.step(event);
      if (hooks.on_step) {
        hooks.on_step(filter, event, step);
      }
    }

    vehicle = integrate_window(vehicle, window, dt);
  }

  result.diagnostics = filter.diagnostics();
  result.final_state = filter.state();
  result.range_rate_hz = static_cast<double>(range_events) / total_duration;
  result.payload_rate_hz = static_cast<double>(payload_events) / total_duration;
  return result;
}

// ---------------------------------------------------------------------------
// Open-loop sensor synthesis
// ---------------------------------------------------------------------------

std::vector<SensorEvent> synthesize_sensors(const KinematicTruthProvider& truth,
                                            const ScenarioConfig& config,
                                            double duration) {
  Rng rng_imu(derive_seed(config.seed, 1));
  Rng rng_flow(derive_seed(config.seed, 2));
  Rng rng_laser(derive_seed(config.seed, 3));
  Rng rng_baro(derive_seed(config.seed, 4));
  Rng rng_mag(derive_seed(config.seed, 5));
  Rng rng_uwb(derive_seed(config.seed, 6));

  const SimNoiseConfig& sn = config.sim_noise;
  const double dt = 1.0 / config.rates.imu_hz;
  const double noise_gyro = sn.gyro_noise_density / std::sqrt(dt);
  const double noise_accel = sn.accel_noise_density / std::sqrt(dt);

  std::vector<std::pair<int, SensorEvent>> events;

  for (long k = 1; static_cast<double>(k) * dt <= duration + 1e-9; ++k) {
    const double s = static_cast<double>(k) * dt;
    const KinematicTruth kt = truth(s);
    ImuSample imu;
    imu.timestamp = s;
    imu.omega = kt.omega_body + rng_imu.gaussian_vec3(noise_gyro);
    imu.accel = kt.accel_body + rng_imu.gaussian_vec3(noise_accel);
    events.push_back({0, make_event(imu)});
  }

  const auto sample_stream = [&](double rate, auto&& make) {
    if (rate <= 0.0) return;
    for (long k = 1; static_cast<double>(k) / rate <= duration + 1e-9; ++k) {
      make(static_cast<double>(k) / rate);
    }
  };

  sample_stream(config.rates.flow_hz, [&](double s) {
    const KinematicTruth kt = truth(s);
    const double q_z = kt.mav_position.z() - kt.target_position.z();
    if (q_z < kFlowAltitudeGuard) return;
    const Vec3 body = kt.mav_attitude.toRotationMatrix().transpose() *
                      (kt.mav_velocity - kt.target_velocity);
    FlowObservation obs;
    obs.v_fx = body.x() / q_z + rng_flow.gaussian(sn.sigma_flow);
    obs.v_fy = body.y() / q_z + rng_flow.gaussian(sn.sigma_flow);
    obs.timestamp = s;
    events.push_back({1, make_event(obs)});
  });

  sample_stream(config.rates.laser_hz, [&](double s) {
    const KinematicTruth kt = truth(s);
    const double c = tilt_cosine(kt.mav_attitude);
    if (c <= kLaserTiltGuard) return;
    LaserObservation obs;
    obs.l = kt.mav_position.z() / c + rng_laser.gaussian(sn.sigma_laser);
    obs.timestamp = s;
    if (obs.l > 0.0) events.push_back({1, make_event(obs)});
  });

  sample_stream(config.rates.baro_hz, [&](double s) {
    const KinematicTruth kt = truth(s);
    BaroObservation obs;
    obs.b = kt.mav_position.z() + sn.baro_offset + rng_baro.gaussian(sn.sigma_baro);
    obs.timestamp = s;
    events.push_back({1, make_event(obs)});
  });

  sample_stream(config.rates.mag_hz, [&](double s) {
    const KinematicTruth kt = truth(s);
    MagObservation obs;
    obs.m = (kt.mav_attitude.toRotationMatrix().transpose() * config.init.mag_reference +
             rng_mag.gaussian_vec3(sn.sigma_mag))
                .normalized();
    obs.timestamp = s;
    events.push_back({1, make_event(obs)});
  });

  {
    const auto ranging_truth = [&](double t_abs) {
      const KinematicTruth kt = truth(t_abs);
      RangingTruth rt;
      rt.mav_position = kt.mav_position;
      rt.mav_attitude = kt.mav_attitude;
      rt.target_position = kt.target_position;
      rt.target_attitude = kt.target_attitude;
      return rt;
    };
    UwbNoiseConfig uwb_noise = config.uwb.noise;
    uwb_noise.pair_bias_error_sigma = sn.pair_bias_error;
    const auto uwb_events = run_schedule(
        ranging_truth, config.make_geometry(), config.make_schedule(), uwb_noise,
        duration, {config.rates.payload_hz, sn.payload_att_sigma_xy, sn.payload_att_sigma_z},
        rng_uwb);
    for (const auto& ev : uwb_events) {
      if (ev.target_attitude_payload) {
        TargetAttitude payload;
        payload.attitude = *ev.target_attitude_payload;
        payload.timestamp = ev.timestamp;
        events.push_back({1, make_event(payload)});
      }
      if (ev.range) {
        events.push_back({1, make_event(*ev.range)});
      }
    }
  }

  std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.second.timestamp != b.second.timestamp) {
      return a.second.timestamp < b.second.timestamp;
    }
    return a.first < b.first;
  });

  std::vector<SensorEvent> out;
  out.reserve(events.size());
  for (auto& [priority, ev] : events) {
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace relnav
