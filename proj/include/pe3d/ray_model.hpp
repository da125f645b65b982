// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/depth_bins.hpp>
#include <pe3d/geometry.hpp>

#include <vector>

namespace pe3d {

/// Top-down planar geometry of one camera-ray and the LiDAR-ray through the
/// same point. The camera sits d_lc ahead of the LiDAR along its view and
/// delta to the side; the point lies at depth d on a ray of azimuth alpha_c.
struct RayGeometry {
  double alpha_c = 0.0;  // radians
  double d = 1.0;        // meters
  double d_lc = 0.0;     // meters
  double delta = 0.0;    // meters

  /// Throws kInvalidArgument on d <= 0, d_lc < 0, delta < 0 or |alpha_c| >= pi/2.
  void validate() const;
};

/// 1 - cos of the angle between the camera-ray and the LiDAR-ray:
/// 1 - cos(alpha_c - atan((tan alpha_c + delta/d) / (1 + d_lc/d))).
double discrepancy(const RayGeometry& g);

/// N_D points along the ray through pixel (u, v), one per bin center.
std::vector<Vec3> camera_ray_points(double u, double v, const CameraParams& cam, const DepthBins& bins);

/// The single point at depth fixed_d; together with the rig origin it spans
/// the LiDAR-ray.
Vec3 lidar_ray_point(double u, double v, const CameraParams& cam, double fixed_d);

}  // namespace pe3d
