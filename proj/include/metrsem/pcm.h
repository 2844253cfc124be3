/**
 * @file pcm.h
 * @brief Incremental pairwise consistent measurement set maximization.
 *
 * Rejects outlier loop closures in two stages: an odometry consistency
 * check on each loop's own cycle, then pairwise cycle checks against the
 * previously accepted loops. The pairwise results form a symmetric
 * adjacency structure that only grows by one row and column per loop; the
 * largest set of mutually consistent loops is a maximum clique of that
 * graph.
 */
#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "metrsem/geometry.h"
#include "metrsem/measurement.h"

namespace metrsem {

struct PcmConfig {
  double odometry_check_confidence = 0.99;
  double pairwise_check_confidence = 0.99;
  int dof = 6;
  // Above this many loops the exact clique solver hands over to the
  // greedy degeneracy-order heuristic.
  int exact_clique_limit = 1000;
};

/// Odometry chain over consecutive keyframes with precomposed prefix
/// poses and covariances, so any relative segment (pose and first-order
/// covariance) is an O(1) query.
class OdometrySequence {
 public:
  OdometrySequence() = default;
  explicit OdometrySequence(
      const std::vector<RelativePoseMeasurement>& odometry);

  /// Appends one more edge; must start at the current last key.
  void append(const RelativePoseMeasurement& edge);

  bool empty() const { return prefix_.empty(); }
  KeyframeId first_key() const { return first_key_; }
  KeyframeId last_key() const {
    return first_key_ + static_cast<KeyframeId>(prefix_.size()) - 1;
  }
  bool contains(KeyframeId key) const {
    return !empty() && key >= first_key() && key <= last_key();
  }

  /// Pose of `key` in the frame of the first keyframe.
  const Pose& pose_in_odom_frame(KeyframeId key) const;

  /// Relative pose and accumulated covariance of the odometry segment
  /// from -> to (either direction). Throws std::out_of_range when a key
  /// lies outside the chain.
  PoseWithCovariance relative(KeyframeId from, KeyframeId to) const;

 private:
  KeyframeId first_key_ = 0;
  std::vector<Pose> prefix_;             // prefix_[k - first_key_]
  std::vector<Covariance6> prefix_cov_;  // right-perturbation, frame of key
};

/// The incrementally grown L x L pairwise-consistency structure.
struct ConsistencyMatrix {
  int dimension = 0;
  std::vector<uint8_t> pairwise;     // dimension^2, symmetric
  std::vector<uint8_t> odometry_ok;  // diagonal: per-loop odometry flag

  // Instrumentation for the incremental contract.
  int64_t odometry_checks_run = 0;
  int64_t pairwise_checks_run = 0;

  bool consistent(int i, int j) const {
    if (i == j) return odometry_ok[i] != 0;
    return pairwise[static_cast<size_t>(i) * dimension + j] != 0;
  }
};

/// Composes odometry from the loop's from-key to its to-key, closes the
/// cycle with the inverse of the loop, and gates the Mahalanobis norm of
/// the cycle error under the propagated cycle covariance.
bool odometry_consistency_check(const RelativePoseMeasurement& loop,
                                const OdometrySequence& odometry,
                                const PcmConfig& config);

/// Gates the four-edge cycle loop_i -> odometry -> inverse(loop_j) ->
/// odometry back to the start.
bool pairwise_consistency_check(const RelativePoseMeasurement& loop_i,
                                const RelativePoseMeasurement& loop_j,
                                const OdometrySequence& odometry,
                                const PcmConfig& config);

/// Grows the matrix by one row/column: one odometry check on the new
/// loop and one pairwise check against each prior loop. Prior entries are
/// untouched. Loops that fail the odometry check keep an all-false row.
void add_loop(ConsistencyMatrix& matrix,
              const RelativePoseMeasurement& new_loop,
              const std::vector<RelativePoseMeasurement>& prior_loops,
              const OdometrySequence& odometry, const PcmConfig& config);

/// Maximum clique of the consistency graph restricted to loops whose
/// odometry flag is true; ties broken by the lexicographically smallest
/// index set. Indices are returned sorted ascending.
std::vector<int> max_consistent_set(const ConsistencyMatrix& matrix,
                                    const PcmConfig& config = {});

struct InlierSelection {
  std::vector<RelativePoseMeasurement> inliers;
  std::vector<RelativePoseMeasurement> outliers;
  std::vector<int> inlier_indices;
};

/// Partition of `loops` by membership in the maximum consistent set.
InlierSelection select_inliers(const ConsistencyMatrix& matrix,
                               const std::vector<RelativePoseMeasurement>& loops,
                               const PcmConfig& config = {});

/// Stateful convenience wrapper used by the pipeline: feeds odometry and
/// loops as they arrive and keeps the consistency matrix up to date.
class Pcm {
 public:
  explicit Pcm(const PcmConfig& config = {}) : config_(config) {}

  void add_odometry(const RelativePoseMeasurement& edge);
  void add_loop_closure(const RelativePoseMeasurement& loop);

  const ConsistencyMatrix& matrix() const { return matrix_; }
  const OdometrySequence& odometry() const { return odometry_; }
  const std::vector<RelativePoseMeasurement>& loops() const { return loops_; }

  InlierSelection select() const {
    return select_inliers(matrix_, loops_, config_);
  }

 private:
  PcmConfig config_;
  OdometrySequence odometry_;
  std::vector<RelativePoseMeasurement> loops_;
  ConsistencyMatrix matrix_;
};

}  // namespace metrsem
