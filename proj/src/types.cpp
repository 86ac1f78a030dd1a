#include "relnav/types.hpp"

#include <cmath>
#include <stdexcept>

namespace relnav {

Quat quat_multiply(const Quat& p, const Quat& r) { return p * r; }

Mat3 quat_to_dcm(const Quat& psi) {
  if (std::abs(psi.norm() - 1.0) > 1e-6) {
    throw std::invalid_argument("quat_to_dcm: quaternion is not unit");
  }
  return psi.toRotationMatrix();
}

Quat renormalize(const Quat& psi) {
  const double n = psi.norm();
  if (!(n > 1e-6)) {
    throw std::domain_error("renormalize: quaternion norm vanished");
  }
  return Quat(psi.w() / n, psi.x() / n, psi.y() / n, psi.z() / n);
}

Quat canonicalize_sign(const Quat& psi) {
  if (psi.w() < 0.0) {
    return Quat(-psi.w(), -psi.x(), -psi.y(), -psi.z());
  }
  return psi;
}

Quat quat_exp(const Vec3& theta) {
  const double angle = theta.norm();
  double half_sinc;  // sin(angle/2) / angle
  if (angle < 1e-8) {
    half_sinc = 0.5 - angle * angle / 48.0;
  } else {
    half_sinc = std::sin(0.5 * angle) / angle;
  }
  const Vec3 v = half_sinc * theta;
  return Quat(std::cos(0.5 * angle), v.x(), v.y(), v.z());
}

Vec3 quat_log(const Quat& q) {
  Quat p = canonicalize_sign(q);  // shortest arc
  const Vec3 v(p.x(), p.y(), p.z());
  const double s = v.norm();
  if (s < 1e-12) {
    return 2.0 / p.w() * v;
  }
  const double angle = 2.0 * std::atan2(s, p.w());
  return (angle / s) * v;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 s = skew(theta);
  if (angle < 1e-8) {
    return Mat3::Identity() + s + 0.5 * s * s;
  }
  const double a2 = angle * angle;
  return Mat3::Identity() + (std::sin(angle) / angle) * s +
         ((1.0 - std::cos(angle)) / a2) * s * s;
}

Mat3 so3_right_jacobian(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 s = skew(theta);
  if (angle < 1e-6) {
    return Mat3::Identity() - 0.5 * s + (1.0 / 6.0) * s * s;
  }
  const double a2 = angle * angle;
  const double a3 = a2 * angle;
  return Mat3::Identity() - ((1.0 - std::cos(angle)) / a2) * s +
         ((angle - std::sin(angle)) / a3) * s * s;
}

StateEstimate apply_error_state(const StateEstimate& nominal, const ErrorState& dx) {
  StateEstimate out = nominal;
  out.attitude = renormalize(nominal.attitude * quat_exp(dx.segment<3>(kAttErrIdx)));
  out.velocity += dx.segment<3>(kVelIdx);
  out.position += dx.segment<3>(kPosIdx);
  out.gyro_bias += dx.segment<3>(kGyroBiasIdx);
  return out;
}

void symmetrize(Covariance& P) { P = 0.5 * (P + P.transpose()).eval(); }

double covariance_min_eigenvalue(const Covariance& P) {
  Eigen::SelfAdjointEigenSolver<Covariance> solver(P, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

bool covariance_is_healthy(const Covariance& P) {
  if (!P.allFinite()) {
    return false;
  }
  const double scale = P.cwiseAbs().maxCoeff();
  const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * std::max(scale, 1.0)) {
    return false;
  }
  return covariance_min_eigenvalue(P) >= -1e-9 * std::max(P.trace(), 1e-30);
}

bool state_is_finite(const StateEstimate& state) {
  return std::isfinite(state.attitude.w()) && std::isfinite(state.attitude.x()) &&
         std::isfinite(state.attitude.y()) && std::isfinite(state.attitude.z()) &&
         state.velocity.allFinite() && state.position.allFinite() &&
         state.gyro_bias.allFinite() && std::isfinite(state.timestamp);
}

bool quat_is_unit(const Quat& q, double tol) {
  return std::abs(q.squaredNorm() - 1.0) <= 2.0 * tol + tol * tol;
}

}  // namespace relnav
