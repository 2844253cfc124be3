/**
 * @file g2o_io.h
 * @brief Plain-text pose-graph file I/O (VERTEX_SE3:QUAT / EDGE_SE3:QUAT).
 *
 * File layout, one record per line:
 *   VERTEX_SE3:QUAT id x y z qx qy qz qw
 *   EDGE_SE3:QUAT from to x y z qx qy qz qw  info(21)
 * where info(21) is the upper triangle, row-major, of the 6x6 information
 * matrix in the file ordering (translation, rotation) used by common
 * pose-graph datasets. In-memory covariances are (rotation, translation)
 * ordered; the loader and writer apply the block permutation.
 */
#pragma once

#include <map>
#include <string>
#include <vector>

#include "metrsem/geometry.h"
#include "metrsem/measurement.h"

namespace metrsem {

struct G2oData {
  std::map<KeyframeId, Pose> vertices;
  std::vector<RelativePoseMeasurement> edges;

  std::vector<RelativePoseMeasurement> odometry() const;
  std::vector<RelativePoseMeasurement> loop_closures() const;
};

G2oData load_g2o(const std::string& path);

void save_g2o(const std::string& path,
              const std::map<KeyframeId, Pose>& vertices,
              const std::vector<RelativePoseMeasurement>& edges);

}  // namespace metrsem
