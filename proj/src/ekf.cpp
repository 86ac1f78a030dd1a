#include "relnav/ekf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace relnav {

namespace {

// Chi-square CDF, closed forms for the measurement dimensions in use.
double chi_square_cdf(double x, int dim) {
  if (x <= 0.0) return 0.0;
  switch (dim) {
    case 1:
      return std::erf(std::sqrt(0.5 * x));
    case 2:
      return 1.0 - std::exp(-0.5 * x);
    case 3:
      return std::erf(std::sqrt(0.5 * x)) -
             std::sqrt(2.0 * x / M_PI) * std::exp(-0.5 * x);
    default:
      throw std::invalid_argument("chi_square_cdf: unsupported dimension");
  }
}

}  // namespace

double chi_square_gate_threshold(double quantile_probability, int dim) {
  if (!(quantile_probability > 0.0 && quantile_probability < 1.0)) {
    throw std::invalid_argument("chi_square_gate_threshold: probability in (0,1)");
  }
  if (dim == 2) {
    return -2.0 * std::log1p(-quantile_probability);
  }
  double lo = 0.0;
  double hi = 1.0;
  while (chi_square_cdf(hi, dim) < quantile_probability) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi_square_cdf(mid, dim) < quantile_probability ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::string to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::imu: return "imu";
    case SensorKind::mag: return "mag";
    case SensorKind::range: return "range";
    case SensorKind::flow: return "flow";
    case SensorKind::laser: return "laser";
    case SensorKind::baro: return "baro";
    case SensorKind::target_attitude: return "target_attitude";
  }
  return "unknown";
}

SensorCounters& FusionDiagnostics::by_kind(SensorKind kind) {
  switch (kind) {
    case SensorKind::imu: return imu;
    case SensorKind::mag: return mag;
    case SensorKind::range: return range;
    case SensorKind::flow: return flow;
    case SensorKind::laser: return laser;
    case SensorKind::baro: return baro;
    case SensorKind::target_attitude: return target_attitude;
  }
  return imu;
}

const SensorCounters& FusionDiagnostics::by_kind(SensorKind kind) const {
  return const_cast<FusionDiagnostics*>(this)->by_kind(kind);
}

std::uint64_t FusionDiagnostics::total_accepted() const {
  return imu.accepted + mag.accepted + range.accepted + flow.accepted +
         laser.accepted + baro.accepted + target_attitude.accepted;
}

std::uint64_t FusionDiagnostics::total_gated() const {
  return mag.gated + range.gated + flow.gated + laser.gated + baro.gated;
}

std::uint64_t FusionDiagnostics::total_errored() const {
  return imu.errored + mag.errored + range.errored + flow.errored +
         laser.errored + baro.errored + target_attitude.errored;
}

RelativeEkf::RelativeEkf(NodeGeometry geometry, MeasurementNoiseConfig measurement_noise,
                         ProcessNoiseConfig process_noise, InitializationConfig init_config)
    : geometry_(std::move(geometry)),
      measurement_noise_(measurement_noise),
      process_noise_(process_noise),
      init_config_(init_config) {
  geometry_.validate();
  for (int dim = 1; dim <= 3; ++dim) {
    gate_dim_[dim] = chi_square_gate_threshold(measurement_noise_.gate_threshold, dim);
  }
}

StepResult RelativeEkf::step(const SensorEvent& event) {
  if (!initialized_) {
    return buffer_event(event);
  }
  // Bounded-disorder admission for everything downstream of prediction.
  if (event.timestamp < last_imu_time_ - kDisorderBound) {
    const SensorKind kind =
        std::holds_alternative<ImuSample>(event.payload) ? SensorKind::imu
        : std::holds_alternative<MagObservation>(event.payload) ? SensorKind::mag
        : std::holds_alternative<RangeObservation>(event.payload) ? SensorKind::range
        : std::holds_alternative<FlowObservation>(event.payload) ? SensorKind::flow
        : std::holds_alternative<LaserObservation>(event.payload) ? SensorKind::laser
        : std::holds_alternative<BaroObservation>(event.payload) ? SensorKind::baro
        : SensorKind::target_attitude;
    diagnostics_.by_kind(kind).errored++;
    return {kind, StepAction::dropped, 0.0};
  }

  StepResult result;
  try {
    result = std::visit(
        [&](const auto& payload) -> StepResult {
          using T = std::decay_t<decltype(payload)>;
          if constexpr (std::is_same_v<T, ImuSample>) {
            return handle_imu(payload);
          } else if constexpr (std::is_same_v<T, MagObservation>) {
            return fuse_mag(payload);
          } else if constexpr (std::is_same_v<T, RangeObservation>) {
            return fuse_range(payload);
          } else if constexpr (std::is_same_v<T, FlowObservation>) {
            return fuse_flow(payload);
          } else if constexpr (std::is_same_v<T, LaserObservation>) {
            return fuse_laser(payload);
          } else if constexpr (std::is_same_v<T, BaroObservation>) {
            return fuse_baro(payload);
          } else {
            target_attitude_ = payload.attitude;
            diagnostics_.target_attitude.accepted++;
            return {SensorKind::target_attitude, StepAction::applied, 0.0};
          }
        },
        event.payload);
  } catch (const std::exception&) {
    const SensorKind kind =
        std::holds_alternative<ImuSample>(event.payload) ? SensorKind::imu : SensorKind::range;
    diagnostics_.by_kind(kind).errored++;
    return {kind, StepAction::errored, 0.0};
  }
  return result;
}

StepResult RelativeEkf::handle_imu(const ImuSample& imu) {
  const double dt = imu.timestamp - last_imu_time_;
  if (dt <= 0.0 || dt > 0.1) {
    // Clock fault: count, re-anchor the IMU timeline, keep the state.
    diagnostics_.imu.errored++;
    last_imu_time_ = imu.timestamp;
    return {SensorKind::imu, StepAction::errored, 0.0};
  }
  auto propagated = propagate(state_, covariance_, imu, dt, process_noise_);
  state_ = propagated.state;
  state_.attitude = canonicalize_sign(state_.attitude);
  state_.timestamp = imu.timestamp;
  covariance_ = propagated.covariance;
  last_imu_time_ = imu.timestamp;
  diagnostics_.imu.accepted++;
  refresh_condition_estimate();
  return {SensorKind::imu, StepAction::applied, 0.0};
}

template <int M>
StepResult RelativeEkf::apply_update(SensorKind kind,
                                     const Eigen::Matrix<double, M, 1>& innovation,
                                     const MeasurementJacobian<M>& jacobian,
                                     const Eigen::Matrix<double, M, M>& noise) {
  auto& counters = diagnostics_.by_kind(kind);
  const Eigen::Matrix<double, M, M> S =
      jacobian * covariance_ * jacobian.transpose() + noise;
  const Eigen::Matrix<double, M, M> S_inv = S.inverse();
  const double nis = innovation.dot(S_inv * innovation);
  counters.last_nis = nis;
  int& streak = gate_streak_[kind];
  if (nis > gate_dim_[M] && streak < kGateStreakLimit) {
    counters.gated++;
    streak++;
    return {kind, StepAction::gated, nis};
  }
  streak = 0;

  const Eigen::Matrix<double, kErrorStateDim, M> gain =
      covariance_ * jacobian.transpose() * S_inv;
  const ErrorState dx = gain * innovation;
  const Covariance identity_minus_kh =
      Covariance::Identity() - gain * jacobian;
  covariance_ = identity_minus_kh * covariance_ * identity_minus_kh.transpose() +
                gain * noise * gain.transpose();
  symmetrize(covariance_);
  state_ = apply_error_state(state_, dx);
  state_.attitude = canonicalize_sign(state_.attitude);
  counters.accepted++;
  refresh_condition_estimate();
  return {kind, StepAction::applied, nis};
}

StepResult RelativeEkf::fuse_range(const RangeObservation& obs) {
  if (obs.target_attitude) {
    target_attitude_ = *obs.target_attitude;
  }
  if (!target_attitude_) {
    throw std::runtime_error("fuse_range: no target attitude ever received");
  }
  const Vec3& a_i = geometry_.requesters.at(static_cast<std::size_t>(obs.requester_id));
  const Vec3& a_j = geometry_.responders.at(static_cast<std::size_t>(obs.responder_id));
  const double predicted = predict_range(state_, *target_attitude_, a_i, a_j);
  if (predicted < 1e-6) {
    diagnostics_.range.errored++;
    return {SensorKind::range, StepAction::dropped, 0.0};
  }
  const auto H = range_jacobian(state_, *target_attitude_, a_i, a_j);
  Eigen::Matrix<double, 1, 1> innovation;
  innovation << obs.distance - predicted;
  Eigen::Matrix<double, 1, 1> noise;
  noise << measurement_noise_.sigma_range * measurement_noise_.sigma_range;
  return apply_update<1>(SensorKind::range, innovation, H, noise);
}

StepResult RelativeEkf::fuse_flow(const FlowObservation& obs) {
  const double q_z = state_.position.z();
  if (q_z < kFlowAltitudeGuard) {
    diagnostics_.flow.errored++;
    return {SensorKind::flow, StepAction::dropped, 0.0};
  }
  const Mat3 r = quat_to_dcm(state_.attitude);
  // Artificial third flow component from the current estimate, then the
  // augmented 3D flow back to a world-frame velocity pseudo-measurement.
  const double v_fz = (r.transpose() * state_.velocity).z() / q_z;
  const Vec3 velocity_meas = q_z * (r * Vec3(obs.v_fx, obs.v_fy, v_fz));
  const Vec3 innovation = velocity_meas - state_.velocity;

  MeasurementJacobian<3> H = MeasurementJacobian<3>::Zero();
  H.block<3, 3>(0, kVelIdx) = Mat3::Identity();
  const double sigma_v = q_z * measurement_noise_.sigma_flow;
  const Mat3 noise = sigma_v * sigma_v * Mat3::Identity();
  return apply_update<3>(SensorKind::flow, innovation, H, noise);
}

StepResult RelativeEkf::fuse_laser(const LaserObservation& obs) {
  const double c = tilt_cosine(state_.attitude);
  if (c <= kLaserTiltGuard) {
    diagnostics_.laser.errored++;
    return {SensorKind::laser, StepAction::dropped, 0.0};
  }
  Eigen::Matrix<double, 1, 1> innovation;
  innovation << obs.l * c - state_.position.z();
  MeasurementJacobian<1> H = MeasurementJacobian<1>::Zero();
  H(0, kPosIdx + 2) = 1.0;
  Eigen::Matrix<double, 1, 1> noise;
  noise << measurement_noise_.sigma_laser * measurement_noise_.sigma_laser;
  return apply_update<1>(SensorKind::laser, innovation, H, noise);
}

StepResult RelativeEkf::fuse_baro(const BaroObservation& obs) {
  Eigen::Matrix<double, 1, 1> innovation;
  innovation << (obs.b - baro_offset_) - state_.position.z();
  MeasurementJacobian<1> H = MeasurementJacobian<1>::Zero();
  H(0, kPosIdx + 2) = 1.0;
  Eigen::Matrix<double, 1, 1> noise;
  noise << measurement_noise_.sigma_baro * measurement_noise_.sigma_baro;
  return apply_update<1>(SensorKind::baro, innovation, H, noise);
}

StepResult RelativeEkf::fuse_mag(const MagObservation& obs) {
  const double norm = obs.m.norm();
  if (!(norm > 1e-6)) {
    diagnostics_.mag.errored++;
    return {SensorKind::mag, StepAction::dropped, 0.0};
  }
  const Vec3 measured = obs.m / norm;
  const Vec3 innovation = measured - predict_mag(state_, init_config_.mag_reference);
  const auto H = mag_jacobian(state_, init_config_.mag_reference);
  const Mat3 noise =
      measurement_noise_.sigma_mag * measurement_noise_.sigma_mag * Mat3::Identity();
  return apply_update<3>(SensorKind::mag, innovation, H, noise);
}

StepResult RelativeEkf::buffer_event(const SensorEvent& event) {
  std::visit(
      [&](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, ImuSample>) {
          buffer_.imu.push_back(payload);
        } else if constexpr (std::is_same_v<T, MagObservation>) {
          buffer_.mag.push_back(payload);
        } else if constexpr (std::is_same_v<T, LaserObservation>) {
          buffer_.laser.push_back(payload);
        } else if constexpr (std::is_same_v<T, BaroObservation>) {
          buffer_.baro.push_back(payload);
          if (!buffer_.first_baro) buffer_.first_baro = payload.b;
        } else if constexpr (std::is_same_v<T, RangeObservation>) {
          if (payload.target_attitude) target_attitude_ = payload.target_attitude;
          buffer_.latest_range[{payload.requester_id, payload.responder_id}] = payload;
        } else if constexpr (std::is_same_v<T, TargetAttitude>) {
          target_attitude_ = payload.attitude;
        }
      },
      event.payload);

  if (std::holds_alternative<ImuSample>(event.payload) && buffer_ready()) {
    initialize_from_buffer();
    return {SensorKind::imu, StepAction::applied, 0.0};
  }
  return {SensorKind::imu, StepAction::buffered, 0.0};
}

bool RelativeEkf::buffer_ready() const {
  if (buffer_.imu.size() < 2) return false;
  const double span = buffer_.imu.back().timestamp - buffer_.imu.front().timestamp;
  if (span < init_config_.min_stationary_span) return false;
  if (!target_attitude_) return false;
  const std::size_t pair_count = geometry_.requesters.size() * geometry_.responders.size();
  return buffer_.latest_range.size() >= pair_count;
}

void RelativeEkf::initialize_from_buffer() {
  if (!buffer_ready()) {
    throw std::runtime_error("initialize_from_buffer: insufficient buffer");
  }

  Vec3 accel_mean = Vec3::Zero();
  Vec3 gyro_mean = Vec3::Zero();
  for (const auto& s : buffer_.imu) {
    accel_mean += s.accel;
    gyro_mean += s.omega;
  }
  accel_mean /= static_cast<double>(buffer_.imu.size());
  gyro_mean /= static_cast<double>(buffer_.imu.size());
  if (accel_mean.norm() < 1.0) {
    throw std::runtime_error("initialize_from_buffer: no usable gravity direction");
  }
  const Vec3 up_body = accel_mean.normalized();

  Quat attitude;
  if (!buffer_.mag.empty()) {
    Vec3 mag_mean = Vec3::Zero();
    for (const auto& s : buffer_.mag) mag_mean += s.m;
    mag_mean.normalize();
    // TRIAD with gravity as the anchor vector and the field for heading.
    const Vec3 t1 = Vec3::UnitZ();
    const Vec3 t2 = Vec3::UnitZ().cross(init_config_.mag_reference).normalized();
    const Vec3 t3 = t1.cross(t2);
    const Vec3 u2 = up_body.cross(mag_mean).normalized();
    const Vec3 u3 = up_body.cross(u2);
    Mat3 world;
    world.col(0) = t1;
    world.col(1) = t2;
    world.col(2) = t3;
    Mat3 body;
    body.col(0) = up_body;
    body.col(1) = u2;
    body.col(2) = u3;
    attitude = renormalize(Quat(world * body.transpose()));
  } else {
    // Roll/pitch only; yaw unobserved until ranging pulls it in.
    attitude = Quat::FromTwoVectors(up_body, Vec3::UnitZ());
  }

  // Trilateration over the buffered cycle.
  const Mat3 r_eq = quat_to_dcm(attitude);
  const Mat3 r_em = quat_to_dcm(*target_attitude_);
  std::vector<std::tuple<Vec3, Vec3, double>> pairs;
  pairs.reserve(buffer_.latest_range.size());
  for (const auto& [ids, obs] : buffer_.latest_range) {
    pairs.emplace_back(r_eq * geometry_.requesters[static_cast<std::size_t>(ids.first)],
                       r_em * geometry_.responders[static_cast<std::size_t>(ids.second)],
                       obs.distance);
  }

  std::vector<Vec3> seeds;
  std::optional<double> altitude_hint;
  if (!buffer_.laser.empty()) {
    const double c = tilt_cosine(attitude);
    double laser_mean = 0.0;
    for (const auto& s : buffer_.laser) laser_mean += s.l;
    laser_mean /= static_cast<double>(buffer_.laser.size());
    altitude_hint = laser_mean * std::max(c, kLaserTiltGuard);
    seeds.push_back({0.0, 0.0, *altitude_hint});
  }
  for (double z : {0.5, 1.5, 3.0, -0.5}) {
    seeds.push_back({0.0, 0.0, z});
  }

  state_.attitude = canonicalize_sign(attitude);
  state_.velocity = Vec3::Zero();
  state_.position = trilaterate(pairs, seeds, altitude_hint);
  state_.gyro_bias = gyro_mean;
  state_.timestamp = buffer_.imu.back().timestamp;

  covariance_ = Covariance::Zero();
  const double yaw_sigma = buffer_.mag.empty() ? 0.5 : init_config_.sigma_att_yaw;
  covariance_(kAttErrIdx + 0, kAttErrIdx + 0) = init_config_.sigma_att_rp * init_config_.sigma_att_rp;
  covariance_(kAttErrIdx + 1, kAttErrIdx + 1) = init_config_.sigma_att_rp * init_config_.sigma_att_rp;
  covariance_(kAttErrIdx + 2, kAttErrIdx + 2) = yaw_sigma * yaw_sigma;
  covariance_.block<3, 3>(kVelIdx, kVelIdx) =
      init_config_.sigma_vel * init_config_.sigma_vel * Mat3::Identity();
  covariance_.block<3, 3>(kPosIdx, kPosIdx) =
      init_config_.sigma_pos * init_config_.sigma_pos * Mat3::Identity();
  covariance_.block<3, 3>(kGyroBiasIdx, kGyroBiasIdx) =
      init_config_.sigma_bias * init_config_.sigma_bias * Mat3::Identity();

  baro_offset_ = buffer_.first_baro ? *buffer_.first_baro - state_.position.z() : 0.0;
  last_imu_time_ = buffer_.imu.back().timestamp;
  initialized_ = true;
  buffer_ = Buffer{};
}

void RelativeEkf::set_state(const StateEstimate& state, const Covariance& covariance) {
  state_ = state;
  covariance_ = covariance;
  last_imu_time_ = state.timestamp;
  initialized_ = true;
}

void RelativeEkf::refresh_condition_estimate() {
  const auto diag = covariance_.diagonal();
  const double lo = diag.minCoeff();
  const double hi = diag.maxCoeff();
  diagnostics_.covariance_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

Vec3 trilaterate(const std::vector<std::tuple<Vec3, Vec3, double>>& pairs,
                 const std::vector<Vec3>& seeds,
                 std::optional<double> altitude_hint) {
  if (pairs.size() < 3) {
    throw std::runtime_error("trilaterate: need at least three ranges");
  }

  // Linear seed from squared-range differences (z is poorly conditioned
  // when the responders are nearly coplanar; refined below).
  std::vector<Vec3> offsets;  // c_k = r_k - p_k, so ||q + c_k|| = d_k
  offsets.reserve(pairs.size());
  for (const auto& [r, p, d] : pairs) offsets.push_back(r - p);

  Eigen::MatrixXd A(static_cast<Eigen::Index>(pairs.size()) - 1, 3);
  Eigen::VectorXd rhs(A.rows());
  const double d0 = std::get<2>(pairs[0]);
  for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(pairs.size()); ++k) {
    const double dk = std::get<2>(pairs[static_cast<std::size_t>(k)]);
    const Vec3 diff = offsets[static_cast<std::size_t>(k)] - offsets[0];
    A.row(k - 1) = diff.transpose();
    rhs(k - 1) = 0.5 * (dk * dk - d0 * d0 -
                        offsets[static_cast<std::size_t>(k)].squaredNorm() +
                        offsets[0].squaredNorm());
  }
  const Vec3 linear = A.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(rhs);

  auto cost = [&](const Vec3& q) {
    double c = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const double rho = (q + offsets[k]).norm() - std::get<2>(pairs[k]);
      c += rho * rho;
    }
    return c;
  };

  auto refine = [&](Vec3 q) {
    for (int it = 0; it < 50; ++it) {
      Eigen::MatrixXd J(static_cast<Eigen::Index>(pairs.size()), 3);
      Eigen::VectorXd residual(J.rows());
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        const Vec3 disp = q + offsets[k];
        const double norm = std::max(disp.norm(), 1e-9);
        J.row(static_cast<Eigen::Index>(k)) = disp.transpose() / norm;
        residual(static_cast<Eigen::Index>(k)) = norm - std::get<2>(pairs[k]);
      }
      const Mat3 JtJ = J.transpose() * J + 1e-12 * Mat3::Identity();
      const Vec3 step = JtJ.ldlt().solve(J.transpose() * residual);
      q -= step;
      if (step.norm() < 1e-13) break;
    }
    return q;
  };

  std::vector<Vec3> candidates;
  candidates.push_back(refine(linear));
  for (const auto& seed : seeds) {
    candidates.push_back(refine(Vec3(linear.x(), linear.y(), seed.z())));
  }

  const auto pick = [&](auto&& admissible) -> std::optional<Vec3> {
    std::optional<Vec3> best;
    double best_cost = 0.0;
    for (const auto& c : candidates) {
      if (!admissible(c)) continue;
      const double value = cost(c);
      if (!best || value < best_cost) {
        best = c;
        best_cost = value;
      }
    }
    return best;
  };

  if (altitude_hint) {
    // Coplanar-responder layouts mirror the solution about the responder
    // plane; the branch near the measured altitude is the physical one.
    const auto near_hint = pick(
        [&](const Vec3& c) { return std::abs(c.z() - *altitude_hint) < 0.75; });
    if (near_hint) return *near_hint;
  }
  return *pick([](const Vec3&) { return true; });
}

}  // namespace relnav
