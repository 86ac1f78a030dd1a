#include "relnav/strapdown.hpp"

#include <stdexcept>

namespace relnav {

namespace {

void check_dt(double dt) {
  if (!(dt > 0.0) || dt > 0.1) {
    throw std::invalid_argument("propagate: dt outside (0, 0.1] s");
  }
}

}  // namespace

Covariance error_state_transition(const StateEstimate& state,
                                  const ImuSample& imu, double dt) {
  const Vec3 omega_hat = imu.omega - state.gyro_bias;
  const Vec3 phi = omega_hat * dt;
  const Mat3 r = quat_to_dcm(state.attitude);
  const Mat3 delta_r = so3_exp(phi);
  const Mat3 r_next = r * delta_r;
  const Mat3 jr = so3_right_jacobian(phi);
  const Mat3 a_skew = skew(imu.accel);

  Covariance F = Covariance::Identity();
  F.block<3, 3>(kAttErrIdx, kAttErrIdx) = delta_r.transpose();
  F.block<3, 3>(kAttErrIdx, kGyroBiasIdx) = -jr * dt;

  const Mat3 f_vt = -0.5 * dt * (r * a_skew + r_next * a_skew * delta_r.transpose());
  const Mat3 f_vb = 0.5 * dt * dt * r_next * a_skew * jr;
  F.block<3, 3>(kVelIdx, kAttErrIdx) = f_vt;
  F.block<3, 3>(kVelIdx, kGyroBiasIdx) = f_vb;

  F.block<3, 3>(kPosIdx, kAttErrIdx) = 0.5 * dt * f_vt;
  F.block<3, 3>(kPosIdx, kVelIdx) = dt * Mat3::Identity();
  F.block<3, 3>(kPosIdx, kGyroBiasIdx) = 0.5 * dt * f_vb;
  return F;
}

PropagationResult propagate(const StateEstimate& state, const Covariance& cov,
                            const ImuSample& imu, double dt,
                            const ProcessNoiseConfig& noise) {
  check_dt(dt);

  const Vec3 omega_hat = imu.omega - state.gyro_bias;
  const Mat3 r = quat_to_dcm(state.attitude);
  const Quat attitude_next = renormalize(state.attitude * quat_exp(omega_hat * dt));
  const Mat3 r_next = quat_to_dcm(attitude_next);

  PropagationResult out;
  out.state.attitude = attitude_next;
  out.state.velocity =
      state.velocity + (0.5 * (r + r_next) * imu.accel - gravity_vector()) * dt;
  out.state.position = state.position + 0.5 * (state.velocity + out.state.velocity) * dt;
  out.state.gyro_bias = state.gyro_bias;
  out.state.timestamp = state.timestamp + dt;

  const Covariance F = error_state_transition(state, imu, dt);
  Covariance Q = Covariance::Zero();
  const double gyro_var = noise.gyro_density * noise.gyro_density;
  const double vel_var = noise.accel_density * noise.accel_density +
                         noise.target_motion_accel * noise.target_motion_accel;
  const double walk_var = noise.gyro_bias_walk * noise.gyro_bias_walk;
  Q.block<3, 3>(kAttErrIdx, kAttErrIdx) = gyro_var * Mat3::Identity();
  Q.block<3, 3>(kVelIdx, kVelIdx) = vel_var * Mat3::Identity();
  Q.block<3, 3>(kGyroBiasIdx, kGyroBiasIdx) = walk_var * Mat3::Identity();

  out.covariance = F * cov * F.transpose() + Q * dt;
  symmetrize(out.covariance);
  return out;
}

}  // namespace relnav
