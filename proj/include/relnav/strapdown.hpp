#pragma once

#include "relnav/types.hpp"

namespace relnav {

struct ImuSample {
  Vec3 omega = Vec3::Zero();  // rad/s, gyro, body frame
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force, body frame
  Timestamp timestamp = 0.0;
};

// Sensor-range sanity bounds used by validation code.
inline constexpr double kMaxGyroRate = 35.0;                       // rad/s
inline constexpr double kMaxAccel = 16.0 * kGravityMagnitude;      // m/s^2

/// Continuous-time process noise intensities. target_motion_accel absorbs
/// the unmodeled target acceleration as velocity process noise.
struct ProcessNoiseConfig {
  double gyro_density = 0.005;        // rad/s/sqrt(Hz)
  double accel_density = 0.12;        // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 5e-4;       // rad/s^2/sqrt(Hz)
  double target_motion_accel = 0.4;   // m/s^2/sqrt(Hz)
};

struct PropagationResult {
  StateEstimate state;
  Covariance covariance;
};

/// Discrete strapdown step over dt with a zero-order-hold IMU sample:
///   psi' = psi ∘ exp(omega_hat dt),  omega_hat = omega - gyro_bias
///   v'   = v + (0.5 (R + R') a - g) dt
///   q'   = q + 0.5 (v + v') dt
/// Covariance: P' = F P F^T + Q dt, symmetrized; quaternion renormalized.
/// Throws std::invalid_argument when dt <= 0 or dt > 0.1 s.
PropagationResult propagate(const StateEstimate& state, const Covariance& cov,
                            const ImuSample& imu, double dt,
                            const ProcessNoiseConfig& noise);

/// Error-state transition of the discrete step above, exact at the
/// linearization point:
///   F_tt = Exp(-phi)                      phi = omega_hat dt
///   F_tb = -Jr(phi) dt
///   F_vt = -dt/2 (R [a]x + R' [a]x Exp(-phi))
///   F_vb =  dt^2/2 R' [a]x Jr(phi)
///   F_qv = I dt,  F_qt = dt/2 F_vt,  F_qb = dt/2 F_vb
Covariance error_state_transition(const StateEstimate& state,
                                  const ImuSample& imu, double dt);

}  // namespace relnav
