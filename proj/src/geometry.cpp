// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/geometry.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pe3d {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonInvertibleIntrinsics: return "NonInvertibleIntrinsics";
    case ErrorCode::kInvalidRotation: return "InvalidRotation";
    case ErrorCode::kInvalidCamera: return "InvalidCamera";
    case ErrorCode::kNonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInvalidRegion: return "InvalidRegion";
    case ErrorCode::kInvalidRange: return "InvalidRange";
    case ErrorCode::kTooFewBins: return "TooFewBins";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNoValidPixels: return "NoValidPixels";
    case ErrorCode::kEmptySparseMap: return "EmptySparseMap";
    case ErrorCode::kAllTokensMasked: return "AllTokensMasked";
    case ErrorCode::kZeroReferenceVector: return "ZeroReferenceVector";
    case ErrorCode::kEmptyRegion: return "EmptyRegion";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

CameraParams::CameraParams(const Mat3& intrinsics, const Mat3& rotation, const Vec3& translation, int width,
                           int height, std::string name)
    : intrinsics_(intrinsics),
      rotation_(rotation),
      translation_(translation),
      width_(width),
      height_(height),
      name_(std::move(name)) {
  if (!intrinsics.allFinite() || !rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::kInvalidCamera, "non-finite camera parameter");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidCamera, "image size must be positive");
  }
  if (std::abs(intrinsics.determinant()) <= 1e-12) {
    throw Error(ErrorCode::kNonInvertibleIntrinsics, "|det K| <= 1e-12");
  }
  if (intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 || intrinsics(2, 2) != 1.0) {
    throw Error(ErrorCode::kNonInvertibleIntrinsics, "last row of K must be (0, 0, 1)");
  }
  const double ortho_err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho_err >= 1e-9) {
    std::ostringstream os;
    os << "rotation is not orthonormal (max |R^T R - I| = " << ortho_err << ")";
    throw Error(ErrorCode::kInvalidRotation, os.str());
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidRotation, "det(R) must be +1");
  }
  intrinsics_inv_ = intrinsics.inverse();
}

void PerceptionRegion::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) {
    throw Error(ErrorCode::kInvalidRegion, "each region max must exceed its min");
  }
}

GridSpec GridSpec::for_camera(const CameraParams& cam, int stride) {
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  return GridSpec{cam.height() / stride, cam.width() / stride, static_cast<double>(stride)};
}

Vec3 back_project(double u, double v, double depth, const CameraParams& cam) {
  if (!(depth > 0.0)) {
    throw Error(ErrorCode::kNonPositiveDepth, "depth must be > 0");
  }
  return cam.rotation() * (cam.intrinsics_inverse() * (depth * Vec3(u, v, 1.0))) + cam.translation();
}

double camera_depth(const Vec3& point, const CameraParams& cam) {
  return cam.rotation().col(2).dot(point - cam.translation());
}

Projection project(const Vec3& point, const CameraParams& cam) {
  const Vec3 in_cam = cam.rotation().transpose() * (point - cam.translation());
  if (!(in_cam.z() > 1e-9)) {
    throw Error(ErrorCode::kBehindCamera, "point is not in front of the camera");
  }
  const Vec3 h = cam.intrinsics() * in_cam;
  return {h.x() / in_cam.z(), h.y() / in_cam.z(), in_cam.z()};
}

PointGrid3D back_project_grid(const DepthMap& depth, const CameraParams& cam, double stride) {
  if (stride < 1.0) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  PointGrid3D grid;
  grid.height = depth.height;
  grid.width = depth.width;
  grid.frame = PointFrame::kMetricRig;
  grid.points.resize(depth.size());
  grid.mask.assign(depth.size(), 0);
  for (int row = 0; row < depth.height; ++row) {
    for (int col = 0; col < depth.width; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * depth.width + col;
      if (!depth.valid[i]) {
        grid.points[i] = cam.translation();
        grid.mask[i] = 1;
        continue;
      }
      grid.points[i] = back_project((col + 0.5) * stride, (row + 0.5) * stride, depth.depth[i], cam);
    }
  }
  return grid;
}

Vec3 normalize_point(const Vec3& point, const PerceptionRegion& region) {
  return {(point.x() - region.x_min) / (region.x_max - region.x_min),
          (point.y() - region.y_min) / (region.y_max - region.y_min),
          (point.z() - region.z_min) / (region.z_max - region.z_min)};
}

bool clamp_unit(Vec3& p) {
  bool clamped = false;
  for (int k = 0; k < 3; ++k) {
    const double c = std::clamp(p[k], 0.0, 1.0);
    if (c != p[k]) clamped = true;
    p[k] = c;
  }
  return clamped;
}

PointGrid3D normalize_grid(const PointGrid3D& grid, const PerceptionRegion& region) {
  region.validate();
  if (grid.frame != PointFrame::kMetricRig) {
    throw Error(ErrorCode::kInvalidArgument, "normalize_grid expects a metric-rig grid");
  }
  PointGrid3D out;
  out.height = grid.height;
  out.width = grid.width;
  out.frame = PointFrame::kNormalized;
  out.points.resize(grid.points.size());
  out.mask = grid.mask;
  for (std::size_t i = 0; i < grid.points.size(); ++i) {
    Vec3 p = normalize_point(grid.points[i], region);
    if (clamp_unit(p)) out.mask[i] = 1;
    out.points[i] = p;
  }
  return out;
}

}  // namespace pe3d
