#include "metrsem/g2o_io.h"

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace metrsem {

namespace {

// Swaps the (rotation, translation) block ordering.
Matrix6d block_swap(const Matrix6d& m) {
  Matrix6d out;
  out.topLeftCorner<3, 3>() = m.bottomRightCorner<3, 3>();
  out.bottomRightCorner<3, 3>() = m.topLeftCorner<3, 3>();
  out.topRightCorner<3, 3>() = m.bottomLeftCorner<3, 3>();
  out.bottomLeftCorner<3, 3>() = m.topRightCorner<3, 3>();
  return out;
}

Matrix6d robust_inverse(const Matrix6d& m) {
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(
      Matrix6d(0.5 * (m + m.transpose())));
  const double tol = 1e-14 * std::max(eig.eigenvalues().maxCoeff(), 1e-30);
  Eigen::Matrix<double, 6, 1> inv = Eigen::Matrix<double, 6, 1>::Zero();
  for (int i = 0; i < 6; ++i) {
    if (eig.eigenvalues()(i) > tol) inv(i) = 1.0 / eig.eigenvalues()(i);
  }
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

std::vector<RelativePoseMeasurement> G2oData::odometry() const {
  std::vector<RelativePoseMeasurement> out;
  for (const auto& e : edges)
    if (e.kind == MeasurementKind::kOdometry) out.push_back(e);
  return out;
}

std::vector<RelativePoseMeasurement> G2oData::loop_closures() const {
  std::vector<RelativePoseMeasurement> out;
  for (const auto& e : edges)
    if (e.kind == MeasurementKind::kLoopClosure) out.push_back(e);
  return out;
}

G2oData load_g2o(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_g2o: cannot open " + path);

  G2oData data;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "VERTEX_SE3:QUAT") {
      KeyframeId id;
      double x, y, z, qx, qy, qz, qw;
      if (!(ss >> id >> x >> y >> z >> qx >> qy >> qz >> qw)) {
        throw std::runtime_error("load_g2o: malformed vertex at line " +
                                 std::to_string(line_no));
      }
      Pose pose;
      pose.translation = Eigen::Vector3d(x, y, z);
      pose.rotation =
          Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
      data.vertices[id] = pose;
    } else if (tag == "EDGE_SE3:QUAT") {
      KeyframeId from, to;
      double x, y, z, qx, qy, qz, qw;
      if (!(ss >> from >> to >> x >> y >> z >> qx >> qy >> qz >> qw)) {
        throw std::runtime_error("load_g2o: malformed edge at line " +
                                 std::to_string(line_no));
      }
      Matrix6d info_file;
      for (int r = 0; r < 6; ++r) {
        for (int c = r; c < 6; ++c) {
          double v;
          if (!(ss >> v)) {
            throw std::runtime_error(
                "load_g2o: missing information entries at line " +
                std::to_string(line_no));
          }
          info_file(r, c) = v;
          info_file(c, r) = v;
        }
      }
      RelativePoseMeasurement edge;
      edge.from_key = from;
      edge.to_key = to;
      edge.relative_pose.translation = Eigen::Vector3d(x, y, z);
      edge.relative_pose.rotation =
          Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
      edge.covariance = robust_inverse(block_swap(info_file));
      edge.kind = (to == from + 1) ? MeasurementKind::kOdometry
                                   : MeasurementKind::kLoopClosure;
      data.edges.push_back(edge);
    }
    // Unknown tags are skipped; real-world files carry FIX and others.
  }
  return data;
}

void save_g2o(const std::string& path,
              const std::map<KeyframeId, Pose>& vertices,
              const std::vector<RelativePoseMeasurement>& edges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_g2o: cannot open " + path);
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };

  for (const auto& [id, pose] : vertices) {
    Eigen::Quaterniond q(pose.rotation);
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    out << "VERTEX_SE3:QUAT " << id;
    for (double v : {pose.translation.x(), pose.translation.y(),
                     pose.translation.z(), q.x(), q.y(), q.z(), q.w()}) {
      out << ' ' << fmt(v);
    }
    out << '\n';
  }
  for (const auto& edge : edges) {
    Eigen::Quaterniond q(edge.relative_pose.rotation);
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    out << "EDGE_SE3:QUAT " << edge.from_key << ' ' << edge.to_key;
    for (double v :
         {edge.relative_pose.translation.x(), edge.relative_pose.translation.y(),
          edge.relative_pose.translation.z(), q.x(), q.y(), q.z(), q.w()}) {
      out << ' ' << fmt(v);
    }
    const Matrix6d info_file = block_swap(robust_inverse(edge.covariance));
    for (int r = 0; r < 6; ++r)
      for (int c = r; c < 6; ++c) out << ' ' << fmt(info_file(r, c));
    out << '\n';
  }
}

}  // namespace metrsem
