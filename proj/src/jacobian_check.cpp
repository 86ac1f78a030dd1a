#include "relnav/jacobian_check.hpp"

#include <cmath>

#include "relnav/rng.hpp"
#include "relnav/sensor_models.hpp"
#include "relnav/strapdown.hpp"

namespace relnav {

ErrorState error_between(const StateEstimate& nominal, const StateEstimate& other) {
  ErrorState dx;
  dx.segment<3>(kAttErrIdx) = quat_log(nominal.attitude.conjugate() * other.attitude);
  dx.segment<3>(kVelIdx) = other.velocity - nominal.velocity;
  dx.segment<3>(kPosIdx) = other.position - nominal.position;
  dx.segment<3>(kGyroBiasIdx) = other.gyro_bias - nominal.gyro_bias;
  return dx;
}

Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const StateEstimate&)>& model,
    const StateEstimate& at, int output_dim, double step) {
  Eigen::MatrixXd J(output_dim, kErrorStateDim);
  for (int i = 0; i < kErrorStateDim; ++i) {
    ErrorState dx = ErrorState::Zero();
    dx(i) = step;
    const Eigen::VectorXd plus = model(apply_error_state(at, dx));
    dx(i) = -step;
    const Eigen::VectorXd minus = model(apply_error_state(at, dx));
    J.col(i) = (plus - minus) / (2.0 * step);
  }
  return J;
}

double jacobian_worst_error(
    const std::function<Eigen::VectorXd(const StateEstimate&)>& model,
    const std::function<Eigen::MatrixXd(const StateEstimate&)>& jacobian,
    const std::vector<StateEstimate>& states, int output_dim, double step) {
  double worst = 0.0;
  for (const auto& state : states) {
    const Eigen::MatrixXd numeric = numeric_jacobian(model, state, output_dim, step);
    const Eigen::MatrixXd analytic = jacobian(state);
    for (int r = 0; r < numeric.rows(); ++r) {
      for (int c = 0; c < numeric.cols(); ++c) {
        const double denom = std::max(std::abs(numeric(r, c)), 1e-4);
        worst = std::max(worst, std::abs(analytic(r, c) - numeric(r, c)) / denom);
      }
    }
  }
  return worst;
}

namespace {

StateEstimate random_state(Rng& rng) {
  StateEstimate s;
  s.attitude = renormalize(quat_exp(rng.gaussian_vec3(0.3)));
  s.velocity = rng.gaussian_vec3(1.0);
  s.position = Vec3(rng.gaussian(2.0), rng.gaussian(2.0), 0.6 + 2.0 * rng.uniform());
  s.gyro_bias = rng.gaussian_vec3(0.05);
  return s;
}

}  // namespace

std::vector<JacobianReport> check_all_jacobians(int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<StateEstimate> states;
  states.reserve(static_cast<std::size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    states.push_back(random_state(rng));
  }

  std::vector<JacobianReport> reports;

  {
    // Fixed random antenna geometry and target attitude per sweep.
    const Vec3 a_i = rng.gaussian_vec3(0.3);
    const Vec3 a_j = Vec3(rng.gaussian(0.3), rng.gaussian(0.3), 1.5 + rng.uniform());
    const Quat psi_m = renormalize(quat_exp(rng.gaussian_vec3(0.5)));
    const auto model = [&](const StateEstimate& s) {
      return Eigen::VectorXd::Constant(1, predict_range(s, psi_m, a_i, a_j)).eval();
    };
    const auto jac = [&](const StateEstimate& s) {
      return Eigen::MatrixXd(range_jacobian(s, psi_m, a_i, a_j));
    };
    reports.push_back({"range", jacobian_worst_error(model, jac, states, 1), trials});
  }

  {
    const auto model = [](const StateEstimate& s) {
      return Eigen::VectorXd(predict_flow(s));
    };
    const auto jac = [](const StateEstimate& s) {
      return Eigen::MatrixXd(flow_jacobian(s));
    };
    reports.push_back({"flow", jacobian_worst_error(model, jac, states, 2), trials});
  }

  {
    const auto model = [](const StateEstimate& s) {
      return Eigen::VectorXd::Constant(1, predict_laser(s)).eval();
    };
    const auto jac = [](const StateEstimate& s) {
      return Eigen::MatrixXd(laser_jacobian(s));
    };
    // Keep states clear of the tilt guard for both the model and its
    // finite-difference neighbourhood.
    std::vector<StateEstimate> safe;
    for (const auto& s : states) {
      if (tilt_cosine(s.attitude) > kLaserTiltGuard + 0.05) safe.push_back(s);
    }
    reports.push_back({"laser", jacobian_worst_error(model, jac, safe, 1),
                       static_cast<int>(safe.size())});
  }

  {
    const auto model = [](const StateEstimate& s) {
      return Eigen::VectorXd::Constant(1, predict_baro(s, 132.0)).eval();
    };
    const auto jac = [](const StateEstimate& s) {
      return Eigen::MatrixXd(baro_jacobian(s));
    };
    reports.push_back({"baro", jacobian_worst_error(model, jac, states, 1), trials});
  }

  {
    const Vec3 m_ref = Vec3(1.0, 0.0, 0.0);
    const auto model = [&](const StateEstimate& s) {
      return Eigen::VectorXd(predict_mag(s, m_ref));
    };
    const auto jac = [&](const StateEstimate& s) {
      return Eigen::MatrixXd(mag_jacobian(s, m_ref));
    };
    reports.push_back({"mag", jacobian_worst_error(model, jac, states, 3), trials});
  }

  {
    // Strapdown transition: differentiate the full discrete step.
    ImuSample imu;
    imu.omega = rng.gaussian_vec3(1.5);
    imu.accel = Vec3(rng.gaussian(2.0), rng.gaussian(2.0),
                     kGravityMagnitude + rng.gaussian(2.0));
    const double dt = 0.01;
    const ProcessNoiseConfig no_noise{0.0, 0.0, 0.0, 0.0};
    const Covariance P0 = Covariance::Identity() * 1e-6;

    double worst = 0.0;
    for (const auto& state : states) {
      const StateEstimate base = propagate(state, P0, imu, dt, no_noise).state;
      const auto map = [&](const StateEstimate& s) {
        const StateEstimate next = propagate(s, P0, imu, dt, no_noise).state;
        return Eigen::VectorXd(error_between(base, next));
      };
      const Eigen::MatrixXd numeric =
          numeric_jacobian(map, state, kErrorStateDim, 1e-6);
      const Eigen::MatrixXd analytic = error_state_transition(state, imu, dt);
      for (int r = 0; r < kErrorStateDim; ++r) {
        for (int c = 0; c < kErrorStateDim; ++c) {
          const double denom = std::max(std::abs(numeric(r, c)), 1e-4);
          worst = std::max(worst, std::abs(analytic(r, c) - numeric(r, c)) / denom);
        }
      }
    }
    reports.push_back({"strapdown_transition", worst, trials});
  }

  return reports;
}

}  // namespace relnav
