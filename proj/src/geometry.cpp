#include "metrsem/geometry.h"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace metrsem {

namespace {
constexpr double kOrthonormalDriftTol = 1e-9;
constexpr double kSmallAngle = 1e-8;
constexpr double kLogAngleLimit = M_PI - 1e-6;

// Value returned by mahalanobis_squared when the residual has support in
// the null space of the covariance: large enough to fail any gate, finite
// so the gate itself does not reject the input as malformed.
constexpr double kEffectivelyInfinite = 1e300;
}  // namespace

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  const Eigen::Matrix3d gram = out.rotation.transpose() * out.rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      kOrthonormalDriftTol) {
    out.rotation = orthonormalize(out.rotation);
  }
  return out;
}

Eigen::Vector3d Pose::operator*(const Eigen::Vector3d& p) const {
  return rotation * p + translation;
}

Eigen::Matrix4d Pose::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

double rotation_angle(const Eigen::Matrix3d& rotation) {
  const double c = std::clamp((rotation.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(
      m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = skew(w);
  if (theta < kSmallAngle) {
    return Eigen::Matrix3d::Identity() + wx + 0.5 * wx * wx;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Eigen::Matrix3d::Identity() + s * wx + c * wx * wx;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& rotation) {
  const double theta = rotation_angle(rotation);
  if (theta >= kLogAngleLimit) {
    throw std::domain_error("so3_log: rotation angle too close to pi");
  }
  const Eigen::Matrix3d a = 0.5 * (rotation - rotation.transpose());
  const Eigen::Vector3d vex(a(2, 1), a(0, 2), a(1, 0));
  if (theta < kSmallAngle) {
    return vex;  // sin(theta)/theta == 1 to double precision
  }
  return (theta / std::sin(theta)) * vex;
}

namespace {

Eigen::Matrix3d se3_v_matrix(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = skew(w);
  if (theta < kSmallAngle) {
    return Eigen::Matrix3d::Identity() + 0.5 * wx + (1.0 / 6.0) * wx * wx;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Eigen::Matrix3d::Identity() + a * wx + b * wx * wx;
}

Eigen::Matrix3d se3_v_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const Eigen::Matrix3d wx = skew(w);
  if (theta < kSmallAngle) {
    return Eigen::Matrix3d::Identity() - 0.5 * wx + (1.0 / 12.0) * wx * wx;
  }
  const double t2 = theta * theta;
  const double c =
      (1.0 - 0.5 * theta * std::sin(theta) / (1.0 - std::cos(theta))) / t2;
  return Eigen::Matrix3d::Identity() - 0.5 * wx + c * wx * wx;
}

}  // namespace

Pose se3_exp(const Twist& x) {
  const Eigen::Vector3d w = x.head<3>();
  const Eigen::Vector3d v = x.tail<3>();
  Pose p;
  p.rotation = so3_exp(w);
  p.translation = se3_v_matrix(w) * v;
  return p;
}

Twist se3_log(const Pose& p) {
  const Eigen::Vector3d w = so3_log(p.rotation);
  Twist x;
  x.head<3>() = w;
  x.tail<3>() = se3_v_inverse(w) * p.translation;
  return x;
}

Matrix6d adjoint(const Pose& p) {
  Matrix6d adj = Matrix6d::Zero();
  adj.topLeftCorner<3, 3>() = p.rotation;
  adj.bottomRightCorner<3, 3>() = p.rotation;
  adj.bottomLeftCorner<3, 3>() = skew(p.translation) * p.rotation;
  return adj;
}

Matrix6d se3_ad(const Twist& x) {
  const Eigen::Matrix3d wx = skew(x.head<3>());
  const Eigen::Matrix3d vx = skew(x.tail<3>());
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = wx;
  ad.bottomRightCorner<3, 3>() = wx;
  ad.bottomLeftCorner<3, 3>() = vx;
  return ad;
}

Matrix6d inverse_right_jacobian(const Twist& x) {
  const Matrix6d ad = se3_ad(x);
  return Matrix6d::Identity() + 0.5 * ad + (1.0 / 12.0) * ad * ad;
}

// --- chi-squared gating ------------------------------------------------

double regularized_lower_gamma(double a, double x) {
  if (!(a > 0.0) || x < 0.0 || !std::isfinite(x)) {
    throw std::invalid_argument("regularized_lower_gamma: bad arguments");
  }
  if (x == 0.0) return 0.0;
  const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
  if (x < a + 1.0) {
    // Series representation.
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 500; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return std::min(1.0, sum * std::exp(log_prefactor));
  }
  // Continued fraction for Q(a, x), modified Lentz.
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  const double q = std::exp(log_prefactor) * h;
  return std::clamp(1.0 - q, 0.0, 1.0);
}

double chi_squared_cdf(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi_squared_cdf: dof < 1");
  if (x <= 0.0) return 0.0;
  return regularized_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi_squared_quantile(int dof, double confidence) {
  if (dof < 1) throw std::invalid_argument("chi_squared_quantile: dof < 1");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw std::invalid_argument(
        "chi_squared_quantile: confidence outside (0, 1)");
  }
  double hi = 1.0;
  while (chi_squared_cdf(hi, dof) < confidence && hi < 1e12) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_squared_cdf(mid, dof) < confidence) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

bool chi2_gate(double squared_mahalanobis, int dof, double confidence) {
  if (!std::isfinite(squared_mahalanobis)) {
    throw std::invalid_argument("chi2_gate: non-finite input");
  }
  return squared_mahalanobis <= chi_squared_quantile(dof, confidence);
}

double mahalanobis_squared(const Twist& residual, const Covariance6& cov) {
  const Covariance6 sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Covariance6> eig(sym);
  const auto& values = eig.eigenvalues();
  const auto& vectors = eig.eigenvectors();
  const double tol = 1e-12 * std::max(values.cwiseAbs().maxCoeff(), 1e-30);
  double m2 = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double proj = vectors.col(k).dot(residual);
    if (values(k) > tol) {
      m2 += proj * proj / values(k);
    } else if (std::abs(proj) > 1e-9 * (1.0 + residual.norm())) {
      return kEffectivelyInfinite;
    }
  }
  return std::min(m2, kEffectivelyInfinite);
}

// --- covariance transport ----------------------------------------------

Covariance6 propagate_covariance_along_cycle(
    const std::vector<PoseWithCovariance>& edges) {
  if (edges.empty()) {
    throw std::invalid_argument(
        "propagate_covariance_along_cycle: empty chain");
  }
  Pose tail;  // composition of edges i+1 .. n-1
  Covariance6 acc = Covariance6::Zero();
  for (auto it = edges.rbegin(); it != edges.rend(); ++it) {
    const Matrix6d transport = adjoint(tail.inverse());
    acc += transport * it->covariance * transport.transpose();
    tail = it->pose * tail;
  }
  return 0.5 * (acc + acc.transpose());
}

}  // namespace metrsem
