#include "metrsem/pose_graph.h"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <stdexcept>

namespace metrsem {

namespace {

Matrix6d information_of(const Covariance6& cov) {
  // Covariances in this codebase are well-conditioned by construction
  // (odometry/loop noise models); fall back to a pseudo-inverse only for
  // rank-deficient input.
  Eigen::SelfAdjointEigenSolver<Covariance6> eig(
      Covariance6(0.5 * (cov + cov.transpose())));
  const double tol = 1e-14 * std::max(eig.eigenvalues().maxCoeff(), 1e-30);
  Eigen::Matrix<double, 6, 1> inv = Eigen::Matrix<double, 6, 1>::Zero();
  for (int i = 0; i < 6; ++i) {
    if (eig.eigenvalues()(i) > tol) inv(i) = 1.0 / eig.eigenvalues()(i);
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

struct Problem {
  std::vector<KeyframeId> keys;
  std::map<KeyframeId, int> index;
  std::vector<Pose> states;
  std::vector<const RelativePoseMeasurement*> edges;
  std::vector<Matrix6d> edge_information;
  int prior_index = 0;
  Pose prior_pose;
  Matrix6d prior_information;
};

double total_error(const Problem& p, const std::vector<Pose>& states) {
  double err = 0.0;
  for (size_t e = 0; e < p.edges.size(); ++e) {
    const auto& edge = *p.edges[e];
    const Pose& xi = states[p.index.at(edge.from_key)];
    const Pose& xj = states[p.index.at(edge.to_key)];
    const Twist r =
        se3_log(edge.relative_pose.inverse() * (xi.inverse() * xj));
    err += r.dot(p.edge_information[e] * r);
  }
  const Twist rp = se3_log(p.prior_pose.inverse() * states[p.prior_index]);
  err += rp.dot(p.prior_information * rp);
  return err;
}

}  // namespace

void edge_residual_jacobians(const RelativePoseMeasurement& edge,
                             const Pose& from, const Pose& to, Twist* residual,
                             Matrix6d* jacobian_from, Matrix6d* jacobian_to) {
  const Pose between = from.inverse() * to;
  const Twist r = se3_log(edge.relative_pose.inverse() * between);
  const Matrix6d inv_jr = inverse_right_jacobian(r);
  if (residual) *residual = r;
  if (jacobian_to) *jacobian_to = inv_jr;
  if (jacobian_from) *jacobian_from = -inv_jr * adjoint(between.inverse());
}

PoseGraph build_graph(const std::vector<RelativePoseMeasurement>& odometry,
                      const std::vector<RelativePoseMeasurement>& loops) {
  if (odometry.empty()) {
    throw std::invalid_argument("build_graph: no odometry");
  }
  PoseGraph graph;
  graph.prior.key = odometry.front().from_key;
  graph.prior.pose = Pose();
  graph.prior.covariance = Covariance6::Identity() * 1e-6;

  Pose current;
  graph.nodes[graph.prior.key] = current;
  KeyframeId expected = graph.prior.key;
  for (const auto& edge : odometry) {
    if (edge.from_key != expected || edge.to_key != expected + 1) {
      throw std::invalid_argument(
          "build_graph: odometry does not form a consecutive chain");
    }
    current = current * edge.relative_pose;
    graph.nodes[edge.to_key] = current;
    graph.edges.push_back(edge);
    expected = edge.to_key;
  }
  for (const auto& loop : loops) {
    if (!graph.nodes.count(loop.from_key) || !graph.nodes.count(loop.to_key)) {
      throw std::invalid_argument(
          "build_graph: loop references a key outside the odometry chain");
    }
    graph.edges.push_back(loop);
  }
  return graph;
}

double graph_error(const PoseGraph& graph,
                   const std::map<KeyframeId, Pose>& estimates) {
  double err = 0.0;
  for (const auto& edge : graph.edges) {
    const Pose& xi = estimates.at(edge.from_key);
    const Pose& xj = estimates.at(edge.to_key);
    const Twist r =
        se3_log(edge.relative_pose.inverse() * (xi.inverse() * xj));
    err += r.dot(information_of(edge.covariance) * r);
  }
  const Twist rp =
      se3_log(graph.prior.pose.inverse() * estimates.at(graph.prior.key));
  err += rp.dot(information_of(graph.prior.covariance) * rp);
  return err;
}

std::pair<std::map<KeyframeId, Pose>, OptimizerReport> optimize(
    const PoseGraph& graph, const OptimizerOptions& options) {
  Problem p;
  for (const auto& [key, pose] : graph.nodes) {
    p.index[key] = static_cast<int>(p.keys.size());
    p.keys.push_back(key);
    p.states.push_back(pose);
  }
  for (const auto& edge : graph.edges) {
    if (!p.index.count(edge.from_key) || !p.index.count(edge.to_key)) {
      throw std::invalid_argument("optimize: edge endpoint missing from nodes");
    }
    p.edges.push_back(&edge);
    p.edge_information.push_back(information_of(edge.covariance));
  }
  if (!p.index.count(graph.prior.key)) {
    throw std::invalid_argument("optimize: prior key missing from nodes");
  }
  p.prior_index = p.index.at(graph.prior.key);
  p.prior_pose = graph.prior.pose;
  p.prior_information = information_of(graph.prior.covariance);

  const int n = static_cast<int>(p.keys.size());
  const int dim = 6 * n;

  OptimizerReport report;
  report.initial_error = total_error(p, p.states);
  double error = report.initial_error;

  using Sparse = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> triplets;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    triplets.clear();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);

    auto add_block = [&](int row, int col, const Matrix6d& block) {
      for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c)
          triplets.emplace_back(6 * row + r, 6 * col + c, block(r, c));
    };

    for (size_t e = 0; e < p.edges.size(); ++e) {
      const auto& edge = *p.edges[e];
      const int i = p.index.at(edge.from_key);
      const int j = p.index.at(edge.to_key);
      Twist r;
      Matrix6d ji, jj;
      edge_residual_jacobians(edge, p.states[i], p.states[j], &r, &ji, &jj);
      const Matrix6d& info = p.edge_information[e];
      add_block(i, i, ji.transpose() * info * ji);
      add_block(j, j, jj.transpose() * info * jj);
      add_block(i, j, ji.transpose() * info * jj);
      add_block(j, i, jj.transpose() * info * ji);
      rhs.segment<6>(6 * i) -= ji.transpose() * (info * r);
      rhs.segment<6>(6 * j) -= jj.transpose() * (info * r);
    }
    {
      const Twist rp =
          se3_log(p.prior_pose.inverse() * p.states[p.prior_index]);
      const Matrix6d jp = inverse_right_jacobian(rp);
      add_block(p.prior_index, p.prior_index,
                jp.transpose() * p.prior_information * jp);
      rhs.segment<6>(6 * p.prior_index) -=
          jp.transpose() * (p.prior_information * rp);
    }

    Sparse hessian(dim, dim);
    hessian.setFromTriplets(triplets.begin(), triplets.end());

    // Sparse Cholesky (LDLT) with AMD ordering; on failure add a small
    // Levenberg damping term and retry.
    Eigen::VectorXd delta;
    bool solved = false;
    double damping = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      Sparse system = hessian;
      if (damping > 0.0) {
        for (int k = 0; k < dim; ++k) system.coeffRef(k, k) += damping;
      }
      Eigen::SimplicialLDLT<Sparse, Eigen::Lower,
                            Eigen::AMDOrdering<int>>
          solver(system);
      if (solver.info() == Eigen::Success) {
        delta = solver.solve(rhs);
        if (solver.info() == Eigen::Success && delta.allFinite()) {
          solved = true;
          break;
        }
      }
      damping = damping == 0.0 ? 1e-9 : damping * 1e3;
    }
    if (!solved) {
      report.final_error = error;
      report.converged = false;
      break;
    }

    // Step acceptance with halving so the error never increases.
    double scale = 1.0;
    double new_error = error;
    std::vector<Pose> candidate;
    bool accepted = false;
    for (int half = 0; half < 12; ++half) {
      candidate = p.states;
      for (int k = 0; k < n; ++k) {
        candidate[k] = candidate[k] * se3_exp(Twist(scale * delta.segment<6>(6 * k)));
      }
      new_error = total_error(p, candidate);
      if (new_error <= error) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    ++report.iterations;
    if (!accepted) {
      report.converged = true;  // no descent direction left at this scale
      break;
    }

    p.states = candidate;
    const double decrease = error - new_error;
    const bool small_decrease =
        decrease <= options.relative_error_tol * std::max(error, 1e-300);
    const bool small_step =
        (scale * delta).lpNorm<Eigen::Infinity>() < options.step_inf_norm_tol;
    error = new_error;
    if (small_decrease || small_step) {
      report.converged = true;
      break;
    }
  }

  report.final_error = error;
  std::map<KeyframeId, Pose> out;
  for (int k = 0; k < n; ++k) out[p.keys[k]] = p.states[k];
  return {out, report};
}

}  // namespace metrsem
