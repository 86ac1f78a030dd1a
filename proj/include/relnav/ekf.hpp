#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "relnav/sensor_models.hpp"
#include "relnav/strapdown.hpp"
#include "relnav/types.hpp"
#include "relnav/uwb_sim.hpp"

// Asynchronous fusion loop: events are consumed in arrival order; IMU
// events drive strapdown prediction over the gap since the previous IMU
// event, everything else becomes an EKF update at the current state.
// Flow and laser readings are folded in through the pragmatic
// artificial-flow / altitude-conversion pseudo-measurements rather than
// full linearization of their models.

namespace relnav {

/// Target orientation relayed over the UWB link.
struct TargetAttitude {
  Quat attitude = Quat::Identity();  // psi^E_M
  Timestamp timestamp = 0.0;
};

using SensorPayload = std::variant<ImuSample, MagObservation, RangeObservation,
                                   FlowObservation, LaserObservation,
                                   BaroObservation, TargetAttitude>;

struct SensorEvent {
  Timestamp timestamp = 0.0;
  SensorPayload payload;
};

template <typename T>
SensorEvent make_event(const T& payload) {
  return SensorEvent{payload.timestamp, payload};
}

struct MeasurementNoiseConfig {
  double sigma_range = 0.025;  // m, radio noise plus residual calibration
  double sigma_flow = 0.07;    // 1/s
  double sigma_laser = 0.06;   // m, covers per-run mounting bias
  double sigma_baro = 0.5;     // m
  double sigma_mag = 0.05;     // unit-vector components
  double gate_threshold = 0.999;  // chi-square quantile per measurement dimension
};

struct InitializationConfig {
  double min_stationary_span = 1.0;  // s of buffered IMU before init
  double sigma_att_rp = 0.03;        // rad, initial roll/pitch
  double sigma_att_yaw = 0.1;        // rad, initial yaw
  double sigma_vel = 0.05;           // m/s
  double sigma_pos = 0.08;           // m
  double sigma_bias = 0.01;          // rad/s
  Vec3 mag_reference = Vec3::UnitX();  // Earth field direction in F_E
};

/// Chi-square quantile for gating, closed-form CDFs for 1..3 dof.
double chi_square_gate_threshold(double quantile_probability, int dim);

enum class SensorKind { imu, mag, range, flow, laser, baro, target_attitude };

std::string to_string(SensorKind kind);

enum class StepAction { applied, gated, dropped, errored, buffered };

struct StepResult {
  SensorKind kind = SensorKind::imu;
  StepAction action = StepAction::applied;
  double nis = 0.0;  // normalized innovation squared, 0 when not applicable
};

struct SensorCounters {
  std::uint64_t accepted = 0;
  std::uint64_t gated = 0;
  std::uint64_t errored = 0;
  double last_nis = 0.0;
};

struct FusionDiagnostics {
  SensorCounters imu, mag, range, flow, laser, baro, target_attitude;
  double covariance_condition = 1.0;  // max/min of the covariance diagonal

  SensorCounters& by_kind(SensorKind kind);
  const SensorCounters& by_kind(SensorKind kind) const;
  std::uint64_t total_accepted() const;
  std::uint64_t total_gated() const;
  std::uint64_t total_errored() const;
};

class RelativeEkf {
 public:
  RelativeEkf(NodeGeometry geometry, MeasurementNoiseConfig measurement_noise,
              ProcessNoiseConfig process_noise, InitializationConfig init_config);

  /// Dispatch one event. Before initialization all events are buffered and
  /// the filter self-initializes once the buffer holds the stationary IMU
  /// span and a full ranging cycle. Events older than the last IMU event
  /// by more than the disorder bound are dropped.
  StepResult step(const SensorEvent& event);

  bool initialized() const { return initialized_; }
  const StateEstimate& state() const { return state_; }
  const Covariance& covariance() const { return covariance_; }
  const FusionDiagnostics& diagnostics() const { return diagnostics_; }
  double baro_offset() const { return baro_offset_; }
  const std::optional<Quat>& held_target_attitude() const { return target_attitude_; }

  /// Attitude from gravity + magnetometer, position from nonlinear
  /// least-squares trilateration over the buffered cycle, velocity zero.
  /// Throws std::runtime_error when the buffer is insufficient.
  void initialize_from_buffer();

  StepResult fuse_range(const RangeObservation& obs);
  StepResult fuse_flow(const FlowObservation& obs);
  StepResult fuse_laser(const LaserObservation& obs);
  StepResult fuse_baro(const BaroObservation& obs);
  StepResult fuse_mag(const MagObservation& obs);

  /// Replace state and covariance (experiment hook, e.g. injected errors).
  void set_state(const StateEstimate& state, const Covariance& covariance);

  /// Override the altitude offset normally estimated at initialization.
  void set_baro_offset(double b0) { baro_offset_ = b0; }

  static constexpr double kDisorderBound = 0.05;  // s
  // After this many consecutive gated innovations from one sensor the next
  // one is fused regardless, so a biased prior cannot freeze the filter out
  // of its own measurements.
  static constexpr int kGateStreakLimit = 40;

 private:
  struct Buffer {
    std::vector<ImuSample> imu;
    std::vector<MagObservation> mag;
    std::vector<LaserObservation> laser;
    std::vector<BaroObservation> baro;
    std::map<std::pair<int, int>, RangeObservation> latest_range;
    std::optional<double> first_baro;
  };

  StepResult buffer_event(const SensorEvent& event);
  bool buffer_ready() const;
  StepResult handle_imu(const ImuSample& imu);

  template <int M>
  StepResult apply_update(SensorKind kind,
                          const Eigen::Matrix<double, M, 1>& innovation,
                          const MeasurementJacobian<M>& jacobian,
                          const Eigen::Matrix<double, M, M>& noise);

  void refresh_condition_estimate();

  NodeGeometry geometry_;
  MeasurementNoiseConfig measurement_noise_;
  ProcessNoiseConfig process_noise_;
  InitializationConfig init_config_;

  bool initialized_ = false;
  StateEstimate state_;
  Covariance covariance_ = Covariance::Identity();
  double baro_offset_ = 0.0;
  std::optional<Quat> target_attitude_;
  Timestamp last_imu_time_ = 0.0;
  std::optional<ImuSample> last_imu_;
  Buffer buffer_;
  FusionDiagnostics diagnostics_;
  double gate_dim_[4] = {0.0, 0.0, 0.0, 0.0};  // chi-square thresholds per dof
  std::map<SensorKind, int> gate_streak_;
};

/// Gauss-Newton point solve of || q + r_k - p_k || = d_k over the antenna
/// pairs; used at initialization and available as a standalone solver.
/// Each tuple is (requester world offset, responder world position, range).
/// Nearly coplanar responders admit a mirrored solution; altitude_hint
/// (e.g. from the laser) picks the physical branch when provided.
Vec3 trilaterate(const std::vector<std::tuple<Vec3, Vec3, double>>& pairs,
                 const std::vector<Vec3>& seeds,
                 std::optional<double> altitude_hint = std::nullopt);

}  // namespace relnav
