// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/geometry.hpp>
#include <pe3d/rig_config.hpp>
#include <pe3d/rng.hpp>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pe3d {

struct Sphere {
  Vec3 center;
  double radius;
};

struct Box {
  Vec3 min;
  Vec3 max;
};

/// Horizontal plane z = height, visible from above.
struct GroundPlane {
  double height;
};

using Primitive = std::variant<Sphere, Box, GroundPlane>;

/// Ray parameter t > eps of the nearest hit of origin + t * dir, if any.
std::optional<double> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir);

/// Unsigned distance from a point to the primitive's surface.
double surface_distance(const Primitive& prim, const Vec3& p);

/// A detection target: one primitive of the scene with a class id.
struct SimObject {
  int primitive = 0;
  int class_id = 1;
  Vec3 center;
};

struct SimScene {
  std::vector<Primitive> primitives;
  std::vector<SimObject> objects;

  /// Throws kInvalidArgument if a primitive is not finite or an object center
  /// lies outside the region.
  void validate(const PerceptionRegion& region) const;

  /// Class id of primitive i: the object class, or 0 for scenery.
  int class_of(int primitive) const;
};

struct RigOptions {
  int width = 704;
  int height = 256;
  double focal = 480.0;
  /// Camera offset from the rig origin along its own view.
  double d_lc = 0.75;
  /// Camera offset perpendicular to its view (towards image right).
  double delta = 0.35;
  double camera_height = 0.0;
  /// Yaw of the first (front) camera; the front camera looks along +y.
  double first_yaw_deg = 90.0;
};

/// Six cameras at 60 degree yaw increments sharing one K. The rig frame is
/// z-up; each camera looks horizontally.
std::vector<CameraParams> default_rig(const RigOptions& opts = {});

/// Yaw of a camera's optical axis in the rig xy-plane (radians).
double camera_yaw(const CameraParams& cam);

struct Rendering {
  DepthMap depth;
  /// Primitive index hit per cell, -1 where nothing was hit.
  std::vector<int> hit;
};

/// Casts one ray per cell center and keeps the nearest hit; depth is the
/// camera-frame z of the hit point.
Rendering render(const SimScene& scene, const CameraParams& cam, const GridSpec& grid);
DepthMap render_depth(const SimScene& scene, const CameraParams& cam, int grid_height, int grid_width, double stride);

/// Depth of the nearest hit along the ray through an arbitrary pixel.
std::optional<double> cast_pixel(const SimScene& scene, const CameraParams& cam, double u, double v,
                                 int* primitive = nullptr);

struct SparseDepth {
  DepthMap map;

  double fill_rate() const;
};

/// z-buffered projection of 3D points into the camera's feature grid.
SparseDepth project_sparse(const std::vector<Vec3>& points, const CameraParams& cam, const GridSpec& grid);

/// Fills every invalid cell with the depth of its nearest valid cell
/// (Euclidean in cell units, ties to the first valid cell in row-major order).
DepthMap complete_depth(const SparseDepth& sparse);

/// Random surface samples: `per_object` points on each object primitive and
/// `ground` points on ground planes within `ground_radius` of the origin.
std::vector<Vec3> sample_surface_points(const SimScene& scene, int per_object, int ground, double ground_radius,
                                        Rng& rng);

struct SceneOptions {
  double ground_height = -1.8;
  double min_range = 8.0;
  double max_range = 30.0;
  double min_radius = 1.0;
  double max_radius = 2.0;
  int objects = 1;
};

/// Ground plane plus `objects` spheres resting on it at random azimuth and
/// range.
SimScene random_object_scene(const SceneOptions& opts, Rng& rng);

SimScene parse_scene(const std::string& json_text);
SimScene load_scene(const std::string& path);
std::string scene_to_json(const SimScene& scene);

}  // namespace pe3d
