#include "metrsem/pcm.h"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "metrsem/max_clique.h"

namespace metrsem {

namespace {

// Cycle rotations at or beyond the log's domain limit cannot come from a
// consistent loop at any realistic noise level.
bool cycle_loggable(const Pose& cycle) {
  return rotation_angle(cycle.rotation) < M_PI - 1e-6;
}

Covariance6 psd_clamp(const Covariance6& m) {
  const Covariance6 sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Covariance6> eig(sym);
  if (eig.eigenvalues().minCoeff() >= 0.0) return sym;
  Eigen::Matrix<double, 6, 1> clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() *
         eig.eigenvectors().transpose();
}

PoseWithCovariance inverse_measurement(const Pose& pose,
                                       const Covariance6& cov) {
  const Matrix6d adj = adjoint(pose);
  return {pose.inverse(), Covariance6(adj * cov * adj.transpose())};
}

bool gate_cycle(const std::vector<PoseWithCovariance>& edges,
                double confidence, int dof) {
  Pose cycle;
  for (const auto& e : edges) cycle = cycle * e.pose;
  if (!cycle_loggable(cycle)) return false;
  const Twist residual = se3_log(cycle);
  const Covariance6 cov = propagate_covariance_along_cycle(edges);
  return chi2_gate(mahalanobis_squared(residual, cov), dof, confidence);
}

}  // namespace

OdometrySequence::OdometrySequence(
    const std::vector<RelativePoseMeasurement>& odometry) {
  for (const auto& edge : odometry) append(edge);
}

void OdometrySequence::append(const RelativePoseMeasurement& edge) {
  if (edge.to_key != edge.from_key + 1) {
    throw std::invalid_argument(
        "OdometrySequence: odometry edges must connect consecutive keys");
  }
  if (prefix_.empty()) {
    first_key_ = edge.from_key;
    prefix_.push_back(Pose());
    prefix_cov_.push_back(Covariance6::Zero());
  } else if (edge.from_key != last_key()) {
    throw std::invalid_argument(
        "OdometrySequence: edge does not extend the chain");
  }
  const Matrix6d transport = adjoint(edge.relative_pose.inverse());
  prefix_.push_back(prefix_.back() * edge.relative_pose);
  prefix_cov_.push_back(psd_clamp(
      transport * prefix_cov_.back() * transport.transpose() +
      edge.covariance));
}

const Pose& OdometrySequence::pose_in_odom_frame(KeyframeId key) const {
  if (!contains(key)) {
    throw std::out_of_range("OdometrySequence: key outside the chain");
  }
  return prefix_[static_cast<size_t>(key - first_key_)];
}

PoseWithCovariance OdometrySequence::relative(KeyframeId from,
                                              KeyframeId to) const {
  if (!contains(from) || !contains(to)) {
    throw std::out_of_range("OdometrySequence: broken odometry chain");
  }
  if (from > to) {
    const PoseWithCovariance fwd = relative(to, from);
    return inverse_measurement(fwd.pose, fwd.covariance);
  }
  const size_t a = static_cast<size_t>(from - first_key_);
  const size_t b = static_cast<size_t>(to - first_key_);
  PoseWithCovariance out;
  out.pose = prefix_[a].inverse() * prefix_[b];
  if (from == to) {
    out.covariance.setZero();
    return out;
  }
  // Noise on prefix[b] splits into noise on prefix[a] transported through
  // the segment plus the independent segment noise; solve for the latter.
  const Matrix6d transport = adjoint(out.pose.inverse());
  out.covariance = psd_clamp(
      prefix_cov_[b] - transport * prefix_cov_[a] * transport.transpose());
  return out;
}

bool odometry_consistency_check(const RelativePoseMeasurement& loop,
                                const OdometrySequence& odometry,
                                const PcmConfig& config) {
  const PoseWithCovariance along = odometry.relative(loop.from_key, loop.to_key);
  const PoseWithCovariance back =
      inverse_measurement(loop.relative_pose, loop.covariance);
  return gate_cycle({along, back}, config.odometry_check_confidence,
                    config.dof);
}

bool pairwise_consistency_check(const RelativePoseMeasurement& loop_i,
                                const RelativePoseMeasurement& loop_j,
                                const OdometrySequence& odometry,
                                const PcmConfig& config) {
  const PoseWithCovariance to_segment =
      odometry.relative(loop_i.to_key, loop_j.to_key);
  const PoseWithCovariance from_segment =
      odometry.relative(loop_j.from_key, loop_i.from_key);
  const PoseWithCovariance loop_j_back =
      inverse_measurement(loop_j.relative_pose, loop_j.covariance);
  return gate_cycle(
      {{loop_i.relative_pose, loop_i.covariance}, to_segment, loop_j_back,
       from_segment},
      config.pairwise_check_confidence, config.dof);
}

void add_loop(ConsistencyMatrix& matrix,
              const RelativePoseMeasurement& new_loop,
              const std::vector<RelativePoseMeasurement>& prior_loops,
              const OdometrySequence& odometry, const PcmConfig& config) {
  const int old_dim = matrix.dimension;
  if (static_cast<int>(prior_loops.size()) != old_dim) {
    throw std::invalid_argument("add_loop: prior loop count != dimension");
  }
  const int dim = old_dim + 1;
  std::vector<uint8_t> grown(static_cast<size_t>(dim) * dim, 0);
  for (int i = 0; i < old_dim; ++i) {
    for (int j = 0; j < old_dim; ++j) {
      grown[static_cast<size_t>(i) * dim + j] =
          matrix.pairwise[static_cast<size_t>(i) * old_dim + j];
    }
  }
  matrix.pairwise = std::move(grown);
  matrix.dimension = dim;

  const bool odo_ok = odometry_consistency_check(new_loop, odometry, config);
  ++matrix.odometry_checks_run;
  matrix.odometry_ok.push_back(odo_ok ? 1 : 0);

  const int row = dim - 1;
  for (int j = 0; j < old_dim; ++j) {
    ++matrix.pairwise_checks_run;
    bool entry = false;
    if (odo_ok && matrix.odometry_ok[j]) {
      entry = pairwise_consistency_check(new_loop, prior_loops[j], odometry,
                                         config);
    }
    matrix.pairwise[static_cast<size_t>(row) * dim + j] = entry ? 1 : 0;
    matrix.pairwise[static_cast<size_t>(j) * dim + row] = entry ? 1 : 0;
  }
}

std::vector<int> max_consistent_set(const ConsistencyMatrix& matrix,
                                    const PcmConfig& config) {
  std::vector<int> eligible;
  for (int i = 0; i < matrix.dimension; ++i) {
    if (matrix.odometry_ok[i]) eligible.push_back(i);
  }
  if (eligible.empty()) return {};

  DenseGraph graph(static_cast<int>(eligible.size()));
  for (int a = 0; a < graph.n; ++a) {
    for (int b = a + 1; b < graph.n; ++b) {
      if (matrix.consistent(eligible[a], eligible[b])) graph.add_edge(a, b);
    }
  }
  const std::vector<int> local =
      matrix.dimension > config.exact_clique_limit ? max_clique_greedy(graph)
                                                   : max_clique_exact(graph);
  std::vector<int> out;
  out.reserve(local.size());
  for (int v : local) out.push_back(eligible[v]);
  return out;
}

InlierSelection select_inliers(const ConsistencyMatrix& matrix,
                               const std::vector<RelativePoseMeasurement>& loops,
                               const PcmConfig& config) {
  InlierSelection out;
  out.inlier_indices = max_consistent_set(matrix, config);
  size_t next = 0;
  for (size_t i = 0; i < loops.size(); ++i) {
    if (next < out.inlier_indices.size() &&
        out.inlier_indices[next] == static_cast<int>(i)) {
      out.inliers.push_back(loops[i]);
      ++next;
    } else {
      out.outliers.push_back(loops[i]);
    }
  }
  return out;
}

void Pcm::add_odometry(const RelativePoseMeasurement& edge) {
  odometry_.append(edge);
}

void Pcm::add_loop_closure(const RelativePoseMeasurement& loop) {
  metrsem::add_loop(matrix_, loop, loops_, odometry_, config_);
  loops_.push_back(loop);
}

}  // namespace metrsem
