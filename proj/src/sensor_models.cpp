#include "relnav/sensor_models.hpp"

#include <cmath>
#include <stdexcept>

namespace relnav {

double tilt_cosine(const Quat& psi) {
  return psi.w() * psi.w() - psi.x() * psi.x() - psi.y() * psi.y() +
         psi.z() * psi.z();
}

double predict_range(const StateEstimate& state, const Quat& target_attitude,
                     const Vec3& a_i_Q, const Vec3& a_j_M) {
  const Mat3 r_eq = quat_to_dcm(state.attitude);
  const Mat3 r_em = quat_to_dcm(target_attitude);
  return (state.position + r_eq * a_i_Q - r_em * a_j_M).norm();
}

MeasurementJacobian<1> range_jacobian(const StateEstimate& state,
                                      const Quat& target_attitude,
                                      const Vec3& a_i_Q, const Vec3& a_j_M) {
  const Mat3 r_eq = quat_to_dcm(state.attitude);
  const Mat3 r_em = quat_to_dcm(target_attitude);
  const Vec3 displacement = state.position + r_eq * a_i_Q - r_em * a_j_M;
  const double d = displacement.norm();
  if (d < 1e-6) {
    throw std::domain_error("range_jacobian: antennae coincide");
  }
  const Eigen::RowVector3d u = displacement.transpose() / d;
  MeasurementJacobian<1> H = MeasurementJacobian<1>::Zero();
  // d(R Exp(dtheta) a)/dtheta = -R [a]x at dtheta = 0
  H.block<1, 3>(0, kAttErrIdx) = -u * r_eq * skew(a_i_Q);
  H.block<1, 3>(0, kPosIdx) = u;
  return H;
}

Eigen::Vector2d predict_flow(const StateEstimate& state) {
  const double q_z = state.position.z();
  if (q_z < kFlowAltitudeGuard) {
    throw std::domain_error("predict_flow: altitude below guard");
  }
  const Mat3 r_eq = quat_to_dcm(state.attitude);
  const Vec3 body_velocity = r_eq.transpose() * state.velocity;
  return body_velocity.head<2>() / q_z;
}

MeasurementJacobian<2> flow_jacobian(const StateEstimate& state) {
  const double q_z = state.position.z();
  if (q_z < kFlowAltitudeGuard) {
    throw std::domain_error("flow_jacobian: altitude below guard");
  }
  const Mat3 r_eq = quat_to_dcm(state.attitude);
  const Vec3 body_velocity = r_eq.transpose() * state.velocity;
  MeasurementJacobian<2> H = MeasurementJacobian<2>::Zero();
  // R(psi ∘ Exp(dtheta))^T v = Exp(-dtheta) R^T v ≈ R^T v + [R^T v]x dtheta
  H.block<2, 3>(0, kAttErrIdx) = skew(body_velocity).topRows<2>() / q_z;
  H.block<2, 3>(0, kVelIdx) = r_eq.transpose().topRows<2>() / q_z;
  H.block<2, 1>(0, kPosIdx + 2) = -body_velocity.head<2>() / (q_z * q_z);
  return H;
}

double predict_laser(const StateEstimate& state) {
  const double c = tilt_cosine(state.attitude);
  if (c <= kLaserTiltGuard) {
    throw std::domain_error("predict_laser: beam too far from vertical");
  }
  return state.position.z() / c;
}

MeasurementJacobian<1> laser_jacobian(const StateEstimate& state) {
  const double c = tilt_cosine(state.attitude);
  if (c <= kLaserTiltGuard) {
    throw std::domain_error("laser_jacobian: beam too far from vertical");
  }
  const Mat3 r_eq = quat_to_dcm(state.attitude);
  const double q_z = state.position.z();
  MeasurementJacobian<1> H = MeasurementJacobian<1>::Zero();
  // c = e3^T R Exp(dtheta) e3  =>  dc/dtheta = -e3^T R [e3]x
  H.block<1, 3>(0, kAttErrIdx) = (q_z / (c * c)) * r_eq.row(2) * skew(Vec3::UnitZ());
  H(0, kPosIdx + 2) = 1.0 / c;
  return H;
}

double predict_baro(const StateEstimate& state, double b0) {
  return state.position.z() + b0;
}

MeasurementJacobian<1> baro_jacobian(const StateEstimate& /*state*/) {
  MeasurementJacobian<1> H = MeasurementJacobian<1>::Zero();
  H(0, kPosIdx + 2) = 1.0;
  return H;
}

Vec3 predict_mag(const StateEstimate& state, const Vec3& m_ref) {
  if (std::abs(m_ref.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("predict_mag: reference field is not unit");
  }
  return quat_to_dcm(state.attitude).transpose() * m_ref;
}

MeasurementJacobian<3> mag_jacobian(const StateEstimate& state, const Vec3& m_ref) {
  const Vec3 predicted = predict_mag(state, m_ref);
  MeasurementJacobian<3> H = MeasurementJacobian<3>::Zero();
  H.block<3, 3>(0, kAttErrIdx) = skew(predicted);
  return H;
}

}  // namespace relnav
