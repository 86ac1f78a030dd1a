#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relnav/ekf.hpp"
#include "relnav/metrics.hpp"
#include "relnav/uwb_sim.hpp"

// Closed-loop experiment harness. Ground truth is generated by a simple
// vehicle model (double integrator with first-order attitude lag) flown by
// a PD position controller that only ever sees the estimator output. All
// sensor streams are synthesized from the truth at their configured rates
// and fed to the fusion filter in timestamp order.

namespace relnav {

enum class ScenarioKind { static_square, far_anchor, translating_target, rotating_target };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct SensorRates {
  double imu_hz = 100.0;
  double flow_hz = 30.0;
  double laser_hz = 40.0;
  double baro_hz = 20.0;
  double mag_hz = 20.0;
  double payload_hz = 10.0;
  double control_hz = 50.0;
};

/// Truth-side sensor imperfections. Biases are drawn once per run from the
/// seeded stream; the *_density values should normally match the filter's
/// process-noise configuration.
struct SimNoiseConfig {
  double gyro_noise_density = 0.005;   // rad/s/sqrt(Hz)
  double accel_noise_density = 0.12;   // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 5e-4;        // rad/s^2/sqrt(Hz)
  double gyro_bias_init = 0.01;        // rad/s, sigma of the constant part
  double accel_bias_sigma = 0.05;      // m/s^2, constant, unmodeled
  double sigma_flow = 0.07;            // 1/s per component
  double sigma_laser = 0.03;           // m
  double laser_bias_sigma = 0.04;      // m, constant per run, unmodeled
  double sigma_baro = 0.5;             // m
  double sigma_mag = 0.05;             // unit-vector components
  double payload_att_sigma_xy = 0.005; // rad
  double payload_att_sigma_z = 0.03;   // rad
  double pair_bias_error = 0.025;      // m, residual ranging calibration error
  double baro_offset = 132.0;          // m, true b0

  void set_all_zero();
};

struct ControllerConfig {
  double kp = 4.0;            // 1/s^2
  double kd = 3.5;            // 1/s
  double accel_max = 4.0;     // m/s^2, commanded acceleration clamp
  double tilt_max = 0.25;     // rad
  double attitude_tau = 0.15; // s, first-order attitude lag
  double omega_max = 3.0;     // rad/s
};

struct UwbSetupConfig {
  double requester_square = 0.55;  // m, side of the MAV antenna square
  std::vector<Vec3> responders = {{0.04, -0.57, 1.753}, {0.035, 0.424, 1.778}};
  double pair_bias = 0.0;          // m, applied to every pair
  double cycle_period = 0.116;     // s
  double response_delay = 2e-4;    // s
  bool single_pair = false;        // degenerate 1x1 layout (yaw-drift demo)
  UwbNoiseConfig noise;
};

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::static_square;
  double duration = 120.0;  // s of simulated flight (after the initial hold)
  std::uint64_t seed = 1;
  double altitude = 0.9;       // m
  double square_side = 4.0;    // m
  double square_speed = 0.5;   // m/s along edges
  double corner_dwell = 1.0;   // s
  double target_speed = 0.4;   // m/s
  double target_yaw_rate = 0.15;  // rad/s (rotating target)
  Vec3 relative_setpoint = {0.0, -1.5, 0.9};  // m, in F_E or F_M per scenario
  Vec3 path_center = Vec3::Zero();  // m, center of the square paths (relative)
  int trajectory_index = 1;   // far-anchor path variant, 1..5
  double init_hold = 2.0;     // s stationary before flight, covers filter init

  SensorRates rates;
  UwbSetupConfig uwb;
  SimNoiseConfig sim_noise;
  MeasurementNoiseConfig filter_noise;
  ProcessNoiseConfig process_noise;
  InitializationConfig init;
  ControllerConfig controller;

  /// Kind-specific defaults (far-anchor responder positions and altitude,
  /// rotating-target setpoint).
  static ScenarioConfig defaults_for(ScenarioKind kind);

  NodeGeometry make_geometry() const;
  RangingSchedule make_schedule() const;

  /// Throws ConfigError on invalid combinations.
  void validate() const;
};

/// Reference for the controller: desired relative position and velocity.
struct ReferenceSample {
  Vec3 setpoint = Vec3::Zero();     // m, relative, F_E
  Vec3 velocity_ff = Vec3::Zero();  // m/s
};

/// Analytic target motion, planar (the platform drives on the floor).
struct TargetState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
  Quat attitude() const;
};

/// Piecewise-linear waypoint path with trapezoidal speed along edges and a
/// dwell at each waypoint; loops when closed.
class WaypointPath {
 public:
  WaypointPath(std::vector<Vec3> waypoints, double speed, double accel,
               double dwell, bool loop);

  ReferenceSample sample(double t) const;
  double lap_time() const { return total_time_; }

 private:
  struct Segment {
    Vec3 from, to;
    double start_time, move_time, dwell;
  };
  std::vector<Segment> segments_;
  double total_time_ = 0.0;
  double speed_ = 0.0;
  double accel_ = 0.0;
  bool loop_ = false;
};

/// MAV path / relative setpoint generator for a scenario. For the rotating
/// target the setpoint follows the relayed target attitude, so the provider
/// exposes the heading-relative rule instead of a time-indexed setpoint.
class TrajectoryProvider {
 public:
  explicit TrajectoryProvider(const ScenarioConfig& config);

  /// Relative-position reference at flight time t (>= 0); for the rotating
  /// target the rule is applied to target_yaw.
  ReferenceSample reference(double t, double target_yaw) const;

  TargetState target(double t) const;

  /// Whether the setpoint is heading-relative (rotating target).
  bool heading_relative() const { return heading_relative_; }

  Vec3 initial_setpoint() const;

 private:
  ScenarioConfig config_;
  std::optional<WaypointPath> mav_path_;     // static scenarios
  std::optional<WaypointPath> target_path_;  // translating target
  bool heading_relative_ = false;
};

/// Full kinematic truth for open-loop sensor synthesis.
struct KinematicTruth {
  Vec3 mav_position = Vec3::Zero();
  Vec3 mav_velocity = Vec3::Zero();
  Quat mav_attitude = Quat::Identity();
  Vec3 omega_body = Vec3::Zero();
  Vec3 accel_body = {0.0, 0.0, kGravityMagnitude};  // specific force
  Vec3 target_position = Vec3::Zero();
  Vec3 target_velocity = Vec3::Zero();
  Quat target_attitude = Quat::Identity();
};

using KinematicTruthProvider = std::function<KinematicTruth(double)>;

/// Samples every sensor stream at its configured rate over [0, duration),
/// merged into one timestamp-ordered event stream (ties: IMU first).
std::vector<SensorEvent> synthesize_sensors(const KinematicTruthProvider& truth,
                                            const ScenarioConfig& config,
                                            double duration);

/// PD with feedforward velocity; pure function of the estimate.
Vec3 position_control_command(const Vec3& est_position, const Vec3& est_velocity,
                              const ReferenceSample& reference,
                              const ControllerConfig& gains);

struct RunHooks {
  /// Called after every filter step (acceptance instrumentation).
  std::function<void(const RelativeEkf&, const SensorEvent&, const StepResult&)> on_step;
  /// Added to the *recorded* truth only; demonstrates that the control path
  /// never reads ground truth.
  Vec3 trace_truth_offset = Vec3::Zero();
};

struct RunResult {
  Trace trace;
  bool aborted = false;
  std::string abort_reason;
  FusionDiagnostics diagnostics;
  StateEstimate final_state;
  double payload_rate_hz = 0.0;  // observed target-attitude payload cadence
  double range_rate_hz = 0.0;    // observed aggregate ranging cadence
};

RunResult run_closed_loop(const ScenarioConfig& config, const RunHooks& hooks = {});

}  // namespace relnav
