#pragma once

#include <optional>

#include "relnav/types.hpp"

// Measurement models h(X) and their analytic Jacobians over the 12-dim
// error state. The range model couples position and attitude through the
// antenna lever arms; flow couples velocity, attitude and altitude; the
// laser slant model depends on altitude and tilt; barometer is altitude
// plus a constant offset; the magnetometer observes attitude only.

namespace relnav {

struct RangeObservation {
  int requester_id = 0;                     // antenna index on the MAV
  int responder_id = 0;                     // antenna index on the target
  double distance = 0.0;                    // m, bias-corrected TWTOF output
  Timestamp timestamp = 0.0;
  // Target orientation relayed inside the responding message; present only
  // when the transaction carried a fresh payload sample.
  std::optional<Quat> target_attitude;
};

struct FlowObservation {
  double v_fx = 0.0;  // 1/s
  double v_fy = 0.0;  // 1/s
  Timestamp timestamp = 0.0;
};

struct LaserObservation {
  double l = 0.0;  // m, slant distance to the floor
  Timestamp timestamp = 0.0;
};

struct BaroObservation {
  double b = 0.0;  // m, pressure altitude (altitude plus offset b0)
  Timestamp timestamp = 0.0;
};

struct MagObservation {
  Vec3 m = Vec3::UnitX();  // normalized field direction in F_Q
  Timestamp timestamp = 0.0;
};

// Guards. The paper thresholds the MAV attitude without giving numbers;
// these sit far outside the <5 deg tilts seen in flight.
inline constexpr double kLaserTiltGuard = 0.2;   // min cos(tilt), ~78 deg
inline constexpr double kFlowAltitudeGuard = 0.1;  // m

/// cos of the angle between body z and inertial z: w^2 - x^2 - y^2 + z^2.
double tilt_cosine(const Quat& psi);

/// Distance between requester antenna i (on the MAV) and responder antenna j
/// (on the target): || q + R(psi) a_i - R(psi_M) a_j ||.
double predict_range(const StateEstimate& state, const Quat& target_attitude,
                     const Vec3& a_i_Q, const Vec3& a_j_M);

/// Row Jacobian of predict_range over the error state.
/// Throws std::domain_error when the predicted range is below 1e-6 m.
MeasurementJacobian<1> range_jacobian(const StateEstimate& state,
                                      const Quat& target_attitude,
                                      const Vec3& a_i_Q, const Vec3& a_j_M);

/// 2D translational flow: [I2 0] (1/q_z) R^Q_E(psi) v.
/// Throws std::domain_error below the altitude guard.
Eigen::Vector2d predict_flow(const StateEstimate& state);

MeasurementJacobian<2> flow_jacobian(const StateEstimate& state);

/// Laser slant distance l = q_z / tilt_cosine(psi).
/// Throws std::domain_error at or below the tilt guard.
double predict_laser(const StateEstimate& state);

MeasurementJacobian<1> laser_jacobian(const StateEstimate& state);

/// Barometer reading b = q_z + b0.
double predict_baro(const StateEstimate& state, double b0);

MeasurementJacobian<1> baro_jacobian(const StateEstimate& state);

/// Body-frame Earth field direction m = R^Q_E(psi) m_ref.
Vec3 predict_mag(const StateEstimate& state, const Vec3& m_ref);

MeasurementJacobian<3> mag_jacobian(const StateEstimate& state, const Vec3& m_ref);

}  // namespace relnav
