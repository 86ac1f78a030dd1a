#pragma once

#include <Eigen/Dense>

// Core state and geometry types shared by the whole estimator stack.
//
// Conventions (fixed project-wide):
//  - Frames: F_E inertial (z up), F_Q quadcopter body, F_M target body.
//  - Quaternions are Hamilton, real part first; StateEstimate::attitude is
//    the body-to-inertial rotation of the MAV (R(attitude) maps F_Q -> F_E).
//  - The error state is 12-dimensional with a minimal 3-parameter attitude
//    error on the body side: true = nominal (+) dx, where
//      attitude_true = attitude ∘ quat_exp(dx[0:3])
//      velocity/position/gyro_bias are additive.
//  - Error-state ordering: [attitude error, velocity, position, gyro bias].

namespace relnav {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;
using Timestamp = double;  // seconds on the simulation clock

inline constexpr int kAttErrIdx = 0;
inline constexpr int kVelIdx = 3;
inline constexpr int kPosIdx = 6;
inline constexpr int kGyroBiasIdx = 9;
inline constexpr int kErrorStateDim = 12;

using Covariance = Eigen::Matrix<double, kErrorStateDim, kErrorStateDim>;
using ErrorState = Eigen::Matrix<double, kErrorStateDim, 1>;
template <int Rows>
using MeasurementJacobian = Eigen::Matrix<double, Rows, kErrorStateDim>;

inline constexpr double kGravityMagnitude = 9.80665;  // m/s^2
inline Vec3 gravity_vector() { return {0.0, 0.0, kGravityMagnitude}; }

/// Relative navigation state: MAV attitude in F_E plus velocity and position
/// of the MAV relative to the target, expressed in F_E.
struct StateEstimate {
  Quat attitude = Quat::Identity();  // psi, F_Q -> F_E
  Vec3 velocity = Vec3::Zero();      // v, m/s, relative, in F_E
  Vec3 position = Vec3::Zero();      // q, m, relative, in F_E
  Vec3 gyro_bias = Vec3::Zero();     // rad/s, body frame
  Timestamp timestamp = 0.0;
};

/// Hamilton product p ∘ r.
Quat quat_multiply(const Quat& p, const Quat& r);

/// DCM R^E_Q from a unit quaternion (body-to-inertial).
/// Throws std::invalid_argument if |psi| deviates from 1 by more than 1e-6.
Mat3 quat_to_dcm(const Quat& psi);

/// Scale to unit norm, direction preserved.
/// Throws std::domain_error when the norm is at or below 1e-6.
Quat renormalize(const Quat& psi);

/// Flip sign so the real part is non-negative (same rotation).
Quat canonicalize_sign(const Quat& psi);

/// Exponential map: rotation vector (angle * axis) to unit quaternion.
Quat quat_exp(const Vec3& theta);

/// Logarithm map, inverse of quat_exp; returns the shortest rotation vector.
Vec3 quat_log(const Quat& q);

Mat3 skew(const Vec3& v);

/// Rodrigues formula, rotation vector to rotation matrix.
Mat3 so3_exp(const Vec3& theta);

/// Right Jacobian of SO(3): Exp(theta + d) ≈ Exp(theta) Exp(Jr(theta) d).
Mat3 so3_right_jacobian(const Vec3& theta);

/// Fold an error-state vector into a nominal state (attitude on the body
/// side, the rest additive). The quaternion is renormalized.
StateEstimate apply_error_state(const StateEstimate& nominal, const ErrorState& dx);

/// P <- (P + P^T)/2.
void symmetrize(Covariance& P);

double covariance_min_eigenvalue(const Covariance& P);

/// Symmetric within 1e-9 * max|P| and min eigenvalue >= -1e-9 * trace.
bool covariance_is_healthy(const Covariance& P);

bool state_is_finite(const StateEstimate& state);

/// |norm(q) - 1| <= tol (tol 1e-9 matches the unit-quaternion invariant).
bool quat_is_unit(const Quat& q, double tol = 1e-9);

}  // namespace relnav
