// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace pe3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera: intrinsics in pixels, camera-to-rig rotation and translation.
///
/// A rig-frame point p relates to the camera-frame point c by p = R c + T.
/// The constructor validates the intrinsics (invertible, last row (0,0,1)) and
/// the rotation (orthonormal, det +1) and caches K^-1.
class CameraParams {
 public:
  CameraParams(const Mat3& intrinsics, const Mat3& rotation, const Vec3& translation, int width, int height,
               std::string name = {});

  const Mat3& intrinsics() const { return intrinsics_; }
  const Mat3& intrinsics_inverse() const { return intrinsics_inv_; }
  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::string& name() const { return name_; }

  /// Optical axis direction in the rig frame.
  Vec3 forward() const { return rotation_.col(2); }

 private:
  Mat3 intrinsics_;
  Mat3 intrinsics_inv_;
  Mat3 rotation_;
  Vec3 translation_;
  int width_;
  int height_;
  std::string name_;
};

/// Axis-aligned box in the rig frame used to normalize coordinates to [0,1]^3.
struct PerceptionRegion {
  double x_min = -61.2, x_max = 61.2;
  double y_min = -61.2, y_max = 61.2;
  double z_min = -10.0, z_max = 10.0;

  /// Throws kInvalidRegion unless every max exceeds its min.
  void validate() const;

  Vec3 lower() const { return {x_min, y_min, z_min}; }
  Vec3 extent() const { return {x_max - x_min, y_max - y_min, z_max - z_min}; }
};

/// Layout of the feature grid laid over an image: cell (a, b) has its center
/// at pixel ((a + 0.5) * stride, (b + 0.5) * stride).
struct GridSpec {
  int height = 0;
  int width = 0;
  double stride = 1.0;

  static GridSpec for_camera(const CameraParams& cam, int stride);

  int cells() const { return height * width; }
  double pixel_u(int col) const { return (col + 0.5) * stride; }
  double pixel_v(int row) const { return (row + 0.5) * stride; }
};

enum class PointFrame { kMetricRig, kNormalized };

/// Per-cell 3D points of one view, stored row-major (index = row * width + col).
struct PointGrid3D {
  int height = 0;
  int width = 0;
  PointFrame frame = PointFrame::kMetricRig;
  std::vector<Vec3> points;
  /// True where the cell has no usable point (no depth, or outside the region).
  std::vector<std::uint8_t> mask;

  const Vec3& at(int row, int col) const { return points[static_cast<std::size_t>(row) * width + col]; }
};

/// Dense per-cell depth (meters, camera-frame z) with a validity flag per cell.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<double> depth;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int h, int w, double fill = 0.0, bool is_valid = false)
      : height(h), width(w), depth(static_cast<std::size_t>(h) * w, fill),
        valid(static_cast<std::size_t>(h) * w, is_valid ? 1 : 0) {}

  std::size_t size() const { return depth.size(); }
  double& at(int row, int col) { return depth[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
  bool is_valid(int row, int col) const { return valid[static_cast<std::size_t>(row) * width + col] != 0; }
};

struct Projection {
  double u;
  double v;
  double depth;
};

/// R K^-1 depth (u, v, 1)^T + T.
Vec3 back_project(double u, double v, double depth, const CameraParams& cam);

/// Inverse of back_project. Throws kBehindCamera when camera-frame z <= 1e-9.
Projection project(const Vec3& point, const CameraParams& cam);

/// Camera-frame z of a rig-frame point (no validity check).
double camera_depth(const Vec3& point, const CameraParams& cam);

/// Back-projects every valid cell of a depth map at its pixel center. Invalid
/// cells get the camera center as their point and are masked.
PointGrid3D back_project_grid(const DepthMap& depth, const CameraParams& cam, double stride);

/// Maps a metric point into region coordinates without clamping.
Vec3 normalize_point(const Vec3& point, const PerceptionRegion& region);

/// Normalizes a metric grid into [0,1]^3. Coordinates outside the region are
/// clamped and the cell is masked.
PointGrid3D normalize_grid(const PointGrid3D& grid, const PerceptionRegion& region);

/// Clamps a normalized point into [0,1]^3; returns true if any coordinate moved.
bool clamp_unit(Vec3& p);

}  // namespace pe3d
