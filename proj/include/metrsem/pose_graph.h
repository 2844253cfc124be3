/**
 * @file pose_graph.h
 * @brief Pose graph construction and Gauss-Newton optimization on SE(3).
 */
#pragma once

#include <map>
#include <vector>

#include "metrsem/geometry.h"
#include "metrsem/measurement.h"

namespace metrsem {

struct PriorFactor {
  KeyframeId key = 0;
  Pose pose;
  Covariance6 covariance = Covariance6::Identity() * 1e-6;
};

struct PoseGraph {
  std::map<KeyframeId, Pose> nodes;  // initial estimates
  std::vector<RelativePoseMeasurement> edges;
  PriorFactor prior;
};

struct OptimizerOptions {
  int max_iterations = 50;
  double relative_error_tol = 1e-9;
  double step_inf_norm_tol = 1e-10;
};

struct OptimizerReport {
  int iterations = 0;
  double initial_error = 0.0;
  double final_error = 0.0;
  bool converged = false;
};

/// Chains odometry from the prior onward for the initial node estimates
/// and appends the loop closures. The prior anchors the first keyframe
/// with covariance 1e-6 I. Throws std::invalid_argument when an edge
/// references a key the odometry chain never reaches (disconnected graph).
PoseGraph build_graph(const std::vector<RelativePoseMeasurement>& odometry,
                      const std::vector<RelativePoseMeasurement>& loops);

/// Total squared Mahalanobis error of all edges plus the prior at the
/// given estimates.
double graph_error(const PoseGraph& graph,
                   const std::map<KeyframeId, Pose>& estimates);

/// Gauss-Newton with right-multiplicative retraction X <- X exp(delta).
/// The sparse normal equations are solved by sparse Cholesky with AMD
/// ordering; a failed factorization retries with small Levenberg damping.
/// Steps that would increase the error are halved before being rejected,
/// so accepted error is non-increasing.
std::pair<std::map<KeyframeId, Pose>, OptimizerReport> optimize(
    const PoseGraph& graph, const OptimizerOptions& options = {});

/// Residual and Jacobians of one relative-pose edge at the given states,
/// exposed for finite-difference validation.
void edge_residual_jacobians(const RelativePoseMeasurement& edge,
                             const Pose& from, const Pose& to, Twist* residual,
                             Matrix6d* jacobian_from, Matrix6d* jacobian_to);

}  // namespace metrsem
