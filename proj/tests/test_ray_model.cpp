// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/ray_model.hpp>
#include <pe3d/rng.hpp>
#include <pe3d/simulator.hpp>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>

namespace pe3d {
namespace {

// 40-digit evaluation of the top-down geometry (camera at the origin looking
// along +y, LiDAR at (-delta, -d_lc)), frozen before the library formula.
constexpr double kDisAt10 = 9.555002330935431638e-5;

/// Brute force: 1 - cos of the angle between the two ray vectors.
long double brute_force_dis(long double alpha, long double d, long double dlc, long double delta) {
  const long double px = d * std::tan(alpha), py = d;
  const long double cx = px, cy = py;
  const long double lx = px + delta, ly = py + dlc;
  const long double c = (cx * lx + cy * ly) / (std::sqrt(cx * cx + cy * cy) * std::sqrt(lx * lx + ly * ly));
  return 1.0L - c;
}

TEST(Discrepancy, FrozenReferenceValue) {
  const RayGeometry g{M_PI / 4, 10.0, 1.0, 0.7};
  EXPECT_NEAR(discrepancy(g), kDisAt10, 1e-15);
  EXPECT_NEAR(static_cast<double>(brute_force_dis(M_PIl / 4, 10, 1, 0.7L)), kDisAt10, 1e-15);
}

TEST(Discrepancy, ForwardRaysCoincide) {
  for (double d : {0.1, 1.0, 37.0}) EXPECT_EQ(discrepancy({0.0, d, 0.8, 0.0}), 0.0);
}

TEST(Discrepancy, VanishesAtLargeDepth) { EXPECT_LT(discrepancy({M_PI / 4, 1e9, 1.0, 0.7}), 1e-12); }

TEST(Discrepancy, MonotoneOverDepth) {
  double prev = INFINITY;
  for (int i = 0; i < 1000; ++i) {
    const double d = 1.0 + 999.0 * i / 999.0;
    const double v = discrepancy({M_PI / 4, d, 1.0, 0.7});
    EXPECT_LE(v, prev) << "d=" << d;
    prev = v;
  }
}

TEST(Discrepancy, ScaleInvariant) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const RayGeometry g{rng.uniform(-1.2, 1.2), rng.uniform(0.5, 50), rng.uniform(0.5, 1.0), rng.uniform(0, 0.7)};
    const double s = rng.uniform(0.1, 10);
    const RayGeometry h{g.alpha_c, g.d * s, g.d_lc * s, g.delta * s};
    EXPECT_NEAR(discrepancy(g), discrepancy(h), 1e-12 + 1e-9 * discrepancy(g));
  }
}

TEST(Discrepancy, MatchesBruteForce) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(-1.4, 1.4), d = rng.uniform(0.5, 100), dlc = rng.uniform(0.5, 1.0),
                 delta = rng.uniform(0, 0.7);
    const double want = static_cast<double>(brute_force_dis(a, d, dlc, delta));
    EXPECT_NEAR(discrepancy({a, d, dlc, delta}), want, 1e-13 + 1e-8 * want);
  }
}

TEST(Discrepancy, RejectsInvalidGeometry) {
  EXPECT_THROW(discrepancy({0.1, 0.0, 1, 0}), Error);
  EXPECT_THROW(discrepancy({0.1, 1.0, -1, 0}), Error);
  EXPECT_THROW(discrepancy({M_PI / 2, 1.0, 1, 0}), Error);
}

CameraParams axis_camera(const Vec3& t) {
  Mat3 k;
  k << 500, 0, 320, 0, 500, 160, 0, 0, 1;
  return CameraParams(k, Mat3::Identity(), t, 640, 320);
}

TEST(CameraRayPoints, PrincipalPixel) {
  const auto pts = camera_ray_points(320, 160, axis_camera(Vec3::Zero()), make_bins(BinMethod::kUD, 1, 61, 2));
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0], Vec3(0, 0, 1));
  EXPECT_EQ(pts[1], Vec3(0, 0, 61));
}

TEST(CameraRayPoints, CollinearAndAnchoredAtFirstBin) {
  Rng rng(9);
  const auto cams = default_rig();
  const DepthBins bins = make_bins(BinMethod::kLID, 1, 61, 16);
  for (int i = 0; i < 50; ++i) {
    const CameraParams& cam = cams[rng.index(cams.size())];
    const double u = rng.uniform(0, 704), v = rng.uniform(0, 256);
    const auto pts = camera_ray_points(u, v, cam, bins);
    EXPECT_EQ(pts.front(), back_project(u, v, bins.centers[0], cam));
    Eigen::MatrixXd m(3, pts.size());
    for (std::size_t j = 0; j < pts.size(); ++j) m.col(j) = pts[j];
    m.colwise() -= m.rowwise().mean();
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
    EXPECT_LT(sv(1), 1e-9 * sv(0));
  }
}

TEST(LidarRayPoint, PrincipalPixelWithOffset) {
  EXPECT_EQ(lidar_ray_point(320, 160, axis_camera(Vec3(0, 0, 1)), 15), Vec3(0, 0, 16));
}

TEST(LidarRayPoint, DifferentCameraCentersGiveDifferentPoints) {
  const Vec3 a = lidar_ray_point(100, 50, axis_camera(Vec3::Zero()), 15);
  const Vec3 b = lidar_ray_point(100, 50, axis_camera(Vec3(0.5, 0, 0)), 15);
  EXPECT_GT((a - b).norm(), 0.4);
}

// The LiDAR-ray through the point at depth d makes the modeled angle with
// the camera-ray: checked with explicit 3D vectors on a rig camera.
TEST(LidarRayPoint, AngleMatchesDiscrepancyModel) {
  RigOptions opts;
  opts.d_lc = 1.0;
  opts.delta = 0.7;
  const CameraParams front = default_rig(opts)[0];
  const double cx = front.intrinsics()(0, 2), cy = front.intrinsics()(1, 2), f = front.intrinsics()(0, 0);
  for (double alpha : {0.2, M_PI / 4, 0.6}) {
    const double u = cx + f * std::tan(alpha);
    const Vec3 cam_dir = (front.rotation() * front.intrinsics_inverse() * Vec3(u, cy, 1)).normalized();
    for (double d : {0.2, 10.0, 60.0}) {
      const Vec3 lidar_dir = lidar_ray_point(u, cy, front, d).normalized();
      const double measured = 1.0 - cam_dir.dot(lidar_dir);
      EXPECT_NEAR(measured, discrepancy({alpha, d, 1.0, 0.7}), 1e-6) << "alpha " << alpha << " d " << d;
    }
  }
  // Points at 0.2 m and 60 m lie on visibly different LiDAR-rays.
  const Vec3 near = lidar_ray_point(cx + f, cy, front, 0.2).normalized();
  const Vec3 far = lidar_ray_point(cx + f, cy, front, 60).normalized();
  EXPECT_GT((near - far).norm(), 1e-2);
}

}  // namespace
}  // namespace pe3d
