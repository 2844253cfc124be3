#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "metrsem/pcm.h"

using namespace metrsem;

namespace {

Covariance6 iso_cov(double rot_var, double trans_var) {
  Covariance6 c = Covariance6::Zero();
  c.topLeftCorner<3, 3>() = Eigen::Matrix3d::Identity() * rot_var;
  c.bottomRightCorner<3, 3>() = Eigen::Matrix3d::Identity() * trans_var;
  return c;
}

// Straight-line ground truth with unit steps along x.
std::vector<Pose> straight_trajectory(int n) {
  std::vector<Pose> poses(n);
  for (int i = 0; i < n; ++i) poses[i].translation = Eigen::Vector3d(i, 0, 0);
  return poses;
}

std::vector<RelativePoseMeasurement> exact_odometry(
    const std::vector<Pose>& gt, const Covariance6& cov) {
  std::vector<RelativePoseMeasurement> edges;
  for (size_t i = 0; i + 1 < gt.size(); ++i) {
    RelativePoseMeasurement e;
    e.from_key = static_cast<KeyframeId>(i);
    e.to_key = static_cast<KeyframeId>(i + 1);
    e.relative_pose = gt[i].inverse() * gt[i + 1];
    e.covariance = cov;
    e.kind = MeasurementKind::kOdometry;
    edges.push_back(e);
  }
  return edges;
}

RelativePoseMeasurement make_loop(const std::vector<Pose>& gt, KeyframeId a,
                                  KeyframeId b, const Covariance6& cov,
                                  const Eigen::Vector3d& offset =
                                      Eigen::Vector3d::Zero()) {
  RelativePoseMeasurement loop;
  loop.from_key = a;
  loop.to_key = b;
  loop.relative_pose = gt[a].inverse() * gt[b];
  loop.relative_pose.translation += offset;
  loop.covariance = cov;
  loop.kind = MeasurementKind::kLoopClosure;
  return loop;
}

}  // namespace

TEST_CASE("odometry segment covariance matches direct chain propagation") {
  std::mt19937 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<RelativePoseMeasurement> edges;
  std::vector<PoseWithCovariance> chain;
  for (int i = 0; i < 8; ++i) {
    Twist x;
    for (int k = 0; k < 6; ++k) x(k) = 0.3 * n(rng);
    RelativePoseMeasurement e;
    e.from_key = i;
    e.to_key = i + 1;
    e.relative_pose = se3_exp(x);
    e.covariance = iso_cov(1e-4 + 1e-3 * (i % 3), 1e-3 + 1e-3 * (i % 2));
    edges.push_back(e);
  }
  OdometrySequence odom(edges);

  for (int a = 0; a < 8; ++a) {
    for (int b = a + 1; b <= 8; ++b) {
      std::vector<PoseWithCovariance> segment;
      for (int i = a; i < b; ++i)
        segment.push_back({edges[i].relative_pose, edges[i].covariance});
      const Covariance6 direct = propagate_covariance_along_cycle(segment);
      const PoseWithCovariance fast = odom.relative(a, b);
      CHECK((fast.covariance - direct).cwiseAbs().maxCoeff() < 1e-9);

      Pose composed;
      for (const auto& s : segment) composed = composed * s.pose;
      CHECK((fast.pose.matrix() - composed.matrix()).cwiseAbs().maxCoeff() <
            1e-9);
    }
  }
}

TEST_CASE("odometry consistency check") {
  const auto gt = straight_trajectory(6);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  SUBCASE("noise-free loop passes") {
    CHECK(odometry_consistency_check(make_loop(gt, 0, 5, cov), odom, cfg));
  }

  SUBCASE("10 m displaced loop fails") {
    const auto loop = make_loop(gt, 0, 5, cov, Eigen::Vector3d(10, 0, 0));
    CHECK_FALSE(odometry_consistency_check(loop, odom, cfg));
    // Hand value: 5 odometry edges + loop, all translation blocks 1e-4 I
    // and identity rotations, so the cycle variance along x is 6e-4 and
    // the Mahalanobis norm 10^2 / 6e-4 >> 16.81.
    const double m2 = 100.0 / 6e-4;
    CHECK(m2 > chi_squared_quantile(6, 0.99));
  }

  SUBCASE("loop displaced by 1 sigma of the cycle covariance passes") {
    std::vector<PoseWithCovariance> cycle;
    for (int i = 0; i < 5; ++i)
      cycle.push_back({gt[i].inverse() * gt[i + 1], cov});
    cycle.push_back({Pose(), cov});  // loop contribution, identity rotation
    const Covariance6 total = propagate_covariance_along_cycle(cycle);
    const double sigma_x = std::sqrt(total(3, 3));

    const auto loop = make_loop(gt, 0, 5, cov, Eigen::Vector3d(sigma_x, 0, 0));
    CHECK(odometry_consistency_check(loop, odom, cfg));

    // The residual is one standard deviation along a single axis.
    const PoseWithCovariance seg = odom.relative(0, 5);
    const Pose cyc = seg.pose * loop.relative_pose.inverse();
    const Covariance6 adj_loop =
        adjoint(loop.relative_pose) * cov *
        adjoint(loop.relative_pose).transpose();
    const double m2 = mahalanobis_squared(
        se3_log(cyc), Covariance6(seg.covariance + adj_loop));
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.05));
  }

  SUBCASE("missing odometry key throws") {
    const auto loop = make_loop(gt, 0, 5, cov);
    OdometrySequence shorter(
        exact_odometry(straight_trajectory(4), cov));
    CHECK_THROWS_AS(odometry_consistency_check(loop, shorter, cfg),
                    std::out_of_range);
  }
}

TEST_CASE("pairwise consistency check") {
  const auto gt = straight_trajectory(10);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  const auto good_a = make_loop(gt, 0, 7, cov);
  const auto good_b = make_loop(gt, 1, 8, cov);
  const auto bad = make_loop(gt, 2, 9, cov, Eigen::Vector3d(5, 0, 0));

  CHECK(pairwise_consistency_check(good_a, good_b, odom, cfg));
  CHECK_FALSE(pairwise_consistency_check(good_a, bad, odom, cfg));
  CHECK(pairwise_consistency_check(good_a, good_a, odom, cfg));
}

TEST_CASE("add_loop bookkeeping") {
  const auto gt = straight_trajectory(10);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  ConsistencyMatrix matrix;
  std::vector<RelativePoseMeasurement> loops;

  SUBCASE("first loop produces a 1x1 matrix") {
    add_loop(matrix, make_loop(gt, 0, 5, cov), loops, odom, cfg);
    CHECK(matrix.dimension == 1);
    CHECK(matrix.odometry_ok[0] == 1);
    CHECK(matrix.odometry_checks_run == 1);
    CHECK(matrix.pairwise_checks_run == 0);
  }

  SUBCASE("loop failing the odometry check gets an all-false row") {
    loops.push_back(make_loop(gt, 0, 5, cov));
    add_loop(matrix, loops[0], {}, odom, cfg);
    loops.push_back(make_loop(gt, 1, 6, cov));
    add_loop(matrix, loops[1], {loops[0]}, odom, cfg);

    const auto bad = make_loop(gt, 2, 9, cov, Eigen::Vector3d(7, 0, 0));
    add_loop(matrix, bad, loops, odom, cfg);
    CHECK(matrix.dimension == 3);
    CHECK(matrix.odometry_ok[2] == 0);
    CHECK_FALSE(matrix.consistent(2, 0));
    CHECK_FALSE(matrix.consistent(2, 1));
    CHECK_FALSE(matrix.consistent(2, 2));
    CHECK(matrix.consistent(0, 1));
  }

  SUBCASE("N loops run exactly N(N-1)/2 pairwise checks") {
    const int n = 9;
    for (int i = 0; i < n; ++i) {
      const auto loop = make_loop(gt, i % 3, 5 + i % 4, cov);
      add_loop(matrix, loop, loops, odom, cfg);
      loops.push_back(loop);
    }
    CHECK(matrix.odometry_checks_run == n);
    CHECK(matrix.pairwise_checks_run == n * (n - 1) / 2);
  }
}

TEST_CASE("select_inliers keeps the mutually consistent set") {
  const auto gt = straight_trajectory(30);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  ConsistencyMatrix matrix;
  std::vector<RelativePoseMeasurement> loops;
  std::mt19937 rng(21);
  std::normal_distribution<double> n01(0.0, 1.0);

  // 10 consistent loops plus 3 corrupted by large, mutually distinct
  // offsets.
  std::vector<int> good_indices;
  for (int i = 0; i < 13; ++i) {
    RelativePoseMeasurement loop;
    if (i % 4 == 3) {
      const Eigen::Vector3d offset(4.0 + n01(rng), 3.0 * n01(rng),
                                   2.0 * n01(rng));
      loop = make_loop(gt, i, 15 + i, cov, offset);
    } else {
      loop = make_loop(gt, i, 15 + i, cov);
      good_indices.push_back(i);
    }
    add_loop(matrix, loop, loops, odom, cfg);
    loops.push_back(loop);
  }

  const auto selection = select_inliers(matrix, loops, cfg);
  CHECK(selection.inlier_indices == good_indices);
  CHECK(selection.inliers.size() == 10);
  CHECK(selection.outliers.size() == 3);

  SUBCASE("zero loops give empty partitions") {
    ConsistencyMatrix empty;
    const auto sel = select_inliers(empty, {}, cfg);
    CHECK(sel.inliers.empty());
    CHECK(sel.outliers.empty());
  }
}

TEST_CASE("matrix entries are insertion-order invariant") {
  const auto gt = straight_trajectory(25);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  std::mt19937 rng(77);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<RelativePoseMeasurement> base;
  for (int i = 0; i < 8; ++i) {
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    if (i % 3 == 2) offset = Eigen::Vector3d(3.0 + n01(rng), n01(rng), 0);
    base.push_back(make_loop(gt, i, 12 + i, cov, offset));
  }

  ConsistencyMatrix forward;
  std::vector<RelativePoseMeasurement> acc;
  for (const auto& l : base) {
    add_loop(forward, l, acc, odom, cfg);
    acc.push_back(l);
  }

  std::vector<int> perm(base.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  ConsistencyMatrix shuffled;
  std::vector<RelativePoseMeasurement> acc2;
  for (int idx : perm) {
    add_loop(shuffled, base[idx], acc2, odom, cfg);
    acc2.push_back(base[idx]);
  }

  for (size_t a = 0; a < base.size(); ++a) {
    for (size_t b = 0; b < base.size(); ++b) {
      const auto pos_a = std::find(perm.begin(), perm.end(), a) - perm.begin();
      const auto pos_b = std::find(perm.begin(), perm.end(), b) - perm.begin();
      CHECK(forward.consistent(a, b) ==
            shuffled.consistent(static_cast<int>(pos_a),
                                static_cast<int>(pos_b)));
    }
  }
}

TEST_CASE("tightening confidence never adds consistency edges") {
  const auto gt = straight_trajectory(25);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));

  std::mt19937 rng(31);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<RelativePoseMeasurement> base;
  for (int i = 0; i < 10; ++i) {
    const Eigen::Vector3d offset(0.02 * n01(rng), 0.02 * n01(rng),
                                 0.02 * n01(rng));
    base.push_back(make_loop(gt, i, 12 + i, cov, offset));
  }

  PcmConfig loose, tight;
  loose.odometry_check_confidence = loose.pairwise_check_confidence = 0.999;
  tight.odometry_check_confidence = tight.pairwise_check_confidence = 0.5;

  ConsistencyMatrix m_loose, m_tight;
  std::vector<RelativePoseMeasurement> acc;
  for (const auto& l : base) {
    add_loop(m_loose, l, acc, odom, loose);
    add_loop(m_tight, l, acc, odom, tight);
    acc.push_back(l);
  }
  for (int a = 0; a < m_loose.dimension; ++a) {
    for (int b = 0; b < m_loose.dimension; ++b) {
      if (m_tight.consistent(a, b)) CHECK(m_loose.consistent(a, b));
    }
  }
}

TEST_CASE("every inlier set is a clique over passing loops") {
  const auto gt = straight_trajectory(40);
  const Covariance6 cov = iso_cov(1e-4, 1e-4);
  OdometrySequence odom(exact_odometry(gt, cov));
  PcmConfig cfg;

  std::mt19937 rng(13);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ConsistencyMatrix matrix;
    std::vector<RelativePoseMeasurement> loops;
    for (int i = 0; i < 12; ++i) {
      Eigen::Vector3d offset = Eigen::Vector3d::Zero();
      if (n01(rng) > 0.3) {
        offset = Eigen::Vector3d(n01(rng), n01(rng), n01(rng)) * 2.0;
      }
      const auto loop = make_loop(gt, i, 20 + i, cov, offset);
      add_loop(matrix, loop, loops, odom, cfg);
      loops.push_back(loop);
    }
    const auto sel = select_inliers(matrix, loops, cfg);
    for (size_t a = 0; a < sel.inlier_indices.size(); ++a) {
      CHECK(matrix.odometry_ok[sel.inlier_indices[a]] == 1);
      for (size_t b = a + 1; b < sel.inlier_indices.size(); ++b) {
        CHECK(matrix.consistent(sel.inlier_indices[a],
                                sel.inlier_indices[b]));
      }
    }
  }
}
