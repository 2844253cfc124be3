/**
 * @file geometry.h
 * @brief SE(3) manifold arithmetic, covariance transport and chi-squared gating.
 */
#pragma once

#include <Eigen/Core>
#include <vector>

namespace metrsem {

// Tangent-space coordinates, ordered [rotation (rad); translation (m)].
using Twist = Eigen::Matrix<double, 6, 1>;

// 6x6 symmetric PSD matrix with the same (rotation, translation) ordering.
using Covariance6 = Eigen::Matrix<double, 6, 6>;

using Matrix6d = Eigen::Matrix<double, 6, 6>;

/// Rigid body transform: orthonormal rotation (det +1) plus translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t)
      : rotation(r), translation(t) {}

  static Pose Identity() { return Pose(); }

  Pose inverse() const;

  /// Group composition. Re-orthonormalizes the rotation when numerical
  /// drift exceeds 1e-9.
  Pose operator*(const Pose& other) const;

  /// Applies the transform to a point.
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const;

  Eigen::Matrix4d matrix() const;
};

Eigen::Matrix3d skew(const Eigen::Vector3d& w);

/// Rotation angle in [0, pi] of an orthonormal matrix.
double rotation_angle(const Eigen::Matrix3d& rotation);

/// Nearest orthonormal matrix with det +1 (polar decomposition).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);

/// Inverse of so3_exp. Throws std::domain_error when the rotation angle
/// is >= pi - 1e-6 where the logarithm is ill-conditioned.
Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation);

/// Exponential map with the exact V-matrix for the translational part;
/// switches to a series expansion below angle 1e-8.
Pose se3_exp(const Twist& x);

/// Inverse of se3_exp. Same angle restriction as so3_log.
Twist se3_log(const Pose& p);

/// Adjoint of T: se3_exp(adjoint(T) * x) == T * se3_exp(x) * T.inverse().
Matrix6d adjoint(const Pose& p);

/// adjoint action of a twist on se(3): ad(x) y = [x, y].
Matrix6d se3_ad(const Twist& x);

/// Inverse right Jacobian of the exponential map, Bernoulli series truncated
/// after the quadratic term: I + ad/2 + ad^2/12. Accurate to O(|x|^4).
Matrix6d inverse_right_jacobian(const Twist& x);

// --- chi-squared gating ------------------------------------------------

/// Regularized lower incomplete gamma P(a, x).
double regularized_lower_gamma(double a, double x);

double chi_squared_cdf(double x, int dof);

/// Inverse CDF of the chi-squared distribution, computed by bisection on
/// the regularized incomplete gamma.
double chi_squared_quantile(int dof, double confidence);

/// True iff squared_mahalanobis <= chi_squared_quantile(dof, confidence).
/// Throws std::invalid_argument on non-finite input, dof < 1 or a
/// confidence outside (0, 1).
bool chi2_gate(double squared_mahalanobis, int dof, double confidence);

/// r^T cov^+ r via eigendecomposition. Residual components in the null
/// space of a rank-deficient covariance yield a huge (but finite) value.
double mahalanobis_squared(const Twist& residual, const Covariance6& cov);

// --- covariance transport ----------------------------------------------

struct PoseWithCovariance {
  Pose pose;
  Covariance6 covariance = Covariance6::Zero();
};

/// First-order covariance of the composition of a measurement chain: each
/// edge covariance is transported by the adjoint of the remaining chain
/// and summed. Covariances are right-perturbation, (rotation, translation)
/// ordered. Throws std::invalid_argument on an empty chain.
Covariance6 propagate_covariance_along_cycle(
    const std::vector<PoseWithCovariance>& edges);

}  // namespace metrsem
