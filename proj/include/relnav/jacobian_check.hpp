#pragma once

#include <functional>
#include <string>
#include <vector>

#include "relnav/types.hpp"

// Central finite differences over the 12-dim error manifold, independent of
// the analytic Jacobian code paths it validates.

namespace relnav {

/// Error vector dx with other = nominal (+) dx (attitude on the body side).
ErrorState error_between(const StateEstimate& nominal, const StateEstimate& other);

/// Numeric Jacobian of a vector-valued model by central differences with
/// the attitude perturbed on the error manifold.
Eigen::MatrixXd numeric_jacobian(
    const std::function<Eigen::VectorXd(const StateEstimate&)>& model,
    const StateEstimate& at, int output_dim, double step = 1e-6);

/// Worst elementwise deviation |analytic - numeric| / max(|numeric|, 1e-4);
/// a result <= 1e-5 means agreement within 1e-5 relative or 1e-9 absolute.
double jacobian_worst_error(
    const std::function<Eigen::VectorXd(const StateEstimate&)>& model,
    const std::function<Eigen::MatrixXd(const StateEstimate&)>& jacobian,
    const std::vector<StateEstimate>& states, int output_dim, double step = 1e-6);

struct JacobianReport {
  std::string model;
  double worst_error = 0.0;
  int trials = 0;
};

/// Random-state sweep over every measurement model and the strapdown
/// transition; deterministic in the seed.
std::vector<JacobianReport> check_all_jacobians(int trials, std::uint64_t seed);

inline constexpr double kJacobianTolerance = 1e-5;

}  // namespace relnav
