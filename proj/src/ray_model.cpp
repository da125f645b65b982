// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/ray_model.hpp>

#include <cmath>

namespace pe3d {

void RayGeometry::validate() const {
  if (!(d > 0.0)) throw Error(ErrorCode::kInvalidArgument, "d must be > 0");
  if (!(d_lc >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "d_lc must be >= 0");
  if (!(delta >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "delta must be >= 0");
  if (!(std::abs(alpha_c) < M_PI / 2)) throw Error(ErrorCode::kInvalidArgument, "|alpha_c| must be < pi/2");
}

double discrepancy(const RayGeometry& g) {
  g.validate();
  const double lidar_azimuth = std::atan((std::tan(g.alpha_c) + g.delta / g.d) / (1.0 + g.d_lc / g.d));
  const double angle = g.alpha_c - lidar_azimuth;
  // 1 - cos(x) = 2 sin^2(x/2) keeps full relative precision for tiny angles.
  const double s = std::sin(0.5 * angle);
  return 2.0 * s * s;
}

std::vector<Vec3> camera_ray_points(double u, double v, const CameraParams& cam, const DepthBins& bins) {
  std::vector<Vec3> pts;
  pts.reserve(bins.centers.size());
  for (double d : bins.centers) pts.push_back(back_project(u, v, d, cam));
  return pts;
}

Vec3 lidar_ray_point(double u, double v, const CameraParams& cam, double fixed_d) {
  return back_project(u, v, fixed_d, cam);
}

}  // namespace pe3d
