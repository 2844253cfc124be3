#pragma once

#include <cstdint>

#include "metrsem/geometry.h"

namespace metrsem {

using KeyframeId = int64_t;

enum class MeasurementKind { kOdometry, kLoopClosure };

/// A relative-pose edge between two keyframes: odometry when the keys are
/// consecutive, loop closure otherwise.
struct RelativePoseMeasurement {
  KeyframeId from_key = 0;
  KeyframeId to_key = 0;
  Pose relative_pose;  // pose of to_key expressed in from_key's frame
  Covariance6 covariance = Covariance6::Zero();
  MeasurementKind kind = MeasurementKind::kOdometry;
};

}  // namespace metrsem
