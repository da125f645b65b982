// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/error.hpp>
#include <pe3d/simulator.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace pe3d {

namespace {

constexpr double kHitEpsilon = 1e-9;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::optional<double> nearest_positive(double t0, double t1) {
  if (t0 > kHitEpsilon) return t0;
  if (t1 > kHitEpsilon) return t1;
  return std::nullopt;
}

}  // namespace

std::optional<double> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir) {
  return std::visit(
      Overloaded{
          [&](const Sphere& s) -> std::optional<double> {
            const Vec3 oc = origin - s.center;
            const double a = dir.squaredNorm();
            const double half_b = oc.dot(dir);
            const double c = oc.squaredNorm() - s.radius * s.radius;
            const double disc = half_b * half_b - a * c;
            if (disc < 0.0) return std::nullopt;
            const double root = std::sqrt(disc);
            // Numerically stable pair of roots.
            const double q = half_b > 0 ? -(half_b + root) : -(half_b - root);
            double t0 = q / a;
            double t1 = q != 0.0 ? c / q : t0;
            if (t0 > t1) std::swap(t0, t1);
            return nearest_positive(t0, t1);
          },
          [&](const Box& b) -> std::optional<double> {
            double t_near = -std::numeric_limits<double>::infinity();
            double t_far = std::numeric_limits<double>::infinity();
            for (int k = 0; k < 3; ++k) {
              if (dir[k] == 0.0) {
                if (origin[k] < b.min[k] || origin[k] > b.max[k]) return std::nullopt;
                continue;
              }
              double ta = (b.min[k] - origin[k]) / dir[k];
              double tb = (b.max[k] - origin[k]) / dir[k];
              if (ta > tb) std::swap(ta, tb);
              t_near = std::max(t_near, ta);
              t_far = std::min(t_far, tb);
            }
            if (t_near > t_far) return std::nullopt;
            return nearest_positive(t_near, t_far);
          },
          [&](const GroundPlane& g) -> std::optional<double> {
            if (dir.z() == 0.0) return std::nullopt;
            const double t = (g.height - origin.z()) / dir.z();
            if (t > kHitEpsilon) return t;
            return std::nullopt;
          },
      },
      prim);
}

double surface_distance(const Primitive& prim, const Vec3& p) {
  return std::visit(Overloaded{
                        [&](const Sphere& s) { return std::abs((p - s.center).norm() - s.radius); },
                        [&](const Box& b) {
                          const Vec3 outside = (b.min - p).cwiseMax(p - b.max).cwiseMax(0.0);
                          if (outside.squaredNorm() > 0.0) return outside.norm();
                          const Vec3 to_min = p - b.min;
                          const Vec3 to_max = b.max - p;
                          return std::min(to_min.minCoeff(), to_max.minCoeff());
                        },
                        [&](const GroundPlane& g) { return std::abs(p.z() - g.height); },
                    },
                    prim);
}

void SimScene::validate(const PerceptionRegion& region) const {
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const bool finite = std::visit(Overloaded{
                                       [](const Sphere& s) { return s.center.allFinite() && std::isfinite(s.radius) && s.radius > 0; },
                                       [](const Box& b) { return b.min.allFinite() && b.max.allFinite() && (b.max.array() > b.min.array()).all(); },
                                       [](const GroundPlane& g) { return std::isfinite(g.height); },
                                   },
                                   primitives[i]);
    if (!finite) throw Error(ErrorCode::kInvalidArgument, "primitives[" + std::to_string(i) + "] is degenerate");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const Vec3 n = normalize_point(objects[i].center, region);
    if ((n.array() < 0.0).any() || (n.array() > 1.0).any()) {
      throw Error(ErrorCode::kInvalidArgument, "objects[" + std::to_string(i) + "] center is outside the region");
    }
    if (objects[i].primitive < 0 || objects[i].primitive >= static_cast<int>(primitives.size())) {
      throw Error(ErrorCode::kInvalidArgument, "objects[" + std::to_string(i) + "] references a missing primitive");
    }
  }
}

int SimScene::class_of(int primitive) const {
  for (const auto& o : objects) {
    if (o.primitive == primitive) return o.class_id;
  }
  return 0;
}

std::vector<CameraParams> default_rig(const RigOptions& opts) {
  Mat3 K;
  K << opts.focal, 0.0, opts.width / 2.0, 0.0, opts.focal, opts.height / 2.0, 0.0, 0.0, 1.0;
  static const char* kNames[] = {"front", "front_left", "back_left", "back", "back_right", "front_right"};
  std::vector<CameraParams> cams;
  for (int i = 0; i < 6; ++i) {
    const double yaw = (opts.first_yaw_deg + 60.0 * i) * M_PI / 180.0;
    const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    Mat3 R;
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = forward;
    const Vec3 T = opts.d_lc * forward + opts.delta * right + Vec3(0.0, 0.0, opts.camera_height);
    cams.emplace_back(K, R, T, opts.width, opts.height, kNames[i]);
  }
  return cams;
}

double camera_yaw(const CameraParams& cam) {
  const Vec3 f = cam.forward();
  return std::atan2(f.y(), f.x());
}

std::optional<double> cast_pixel(const SimScene& scene, const CameraParams& cam, double u, double v, int* primitive) {
  // Direction with unit camera-frame z, so the ray parameter is the depth.
  const Vec3 dir = cam.rotation() * (cam.intrinsics_inverse() * Vec3(u, v, 1.0));
  std::optional<double> best;
  int best_prim = -1;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto t = intersect(scene.primitives[i], cam.translation(), dir);
    if (t && (!best || *t < *best)) {
      best = t;
      best_prim = static_cast<int>(i);
    }
  }
  if (primitive) *primitive = best_prim;
  return best;
}

Rendering render(const SimScene& scene, const CameraParams& cam, const GridSpec& grid) {
  Rendering r{DepthMap(grid.height, grid.width), std::vector<int>(grid.cells(), -1)};
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const int cell = row * grid.width + col;
      int prim = -1;
      if (const auto t = cast_pixel(scene, cam, grid.pixel_u(col), grid.pixel_v(row), &prim)) {
        r.depth.depth[cell] = *t;
        r.depth.valid[cell] = 1;
        r.hit[cell] = prim;
      }
    }
  }
  return r;
}

DepthMap render_depth(const SimScene& scene, const CameraParams& cam, int grid_height, int grid_width, double stride) {
  return render(scene, cam, GridSpec{grid_height, grid_width, stride}).depth;
}

double SparseDepth::fill_rate() const {
  if (map.size() == 0) return 0.0;
  const auto n = std::count_if(map.valid.begin(), map.valid.end(), [](std::uint8_t v) { return v != 0; });
  return static_cast<double>(n) / static_cast<double>(map.size());
}

SparseDepth project_sparse(const std::vector<Vec3>& points, const CameraParams& cam, const GridSpec& grid) {
  SparseDepth s{DepthMap(grid.height, grid.width)};
  for (const auto& p : points) {
    if (camera_depth(p, cam) <= 1e-9) continue;
    const Projection pr = project(p, cam);
    const double fc = std::floor(pr.u / grid.stride);
    const double fr = std::floor(pr.v / grid.stride);
    if (fc < 0 || fr < 0 || fc >= grid.width || fr >= grid.height) continue;
    const std::size_t cell = static_cast<std::size_t>(fr) * grid.width + static_cast<std::size_t>(fc);
    if (!s.map.valid[cell] || pr.depth < s.map.depth[cell]) {
      s.map.depth[cell] = pr.depth;
      s.map.valid[cell] = 1;
    }
  }
  return s;
}

DepthMap complete_depth(const SparseDepth& sparse) {
  const DepthMap& in = sparse.map;
  std::vector<int> sources;
  for (int i = 0; i < static_cast<int>(in.size()); ++i) {
    if (in.valid[i]) sources.push_back(i);
  }
  if (sources.empty()) throw Error(ErrorCode::kEmptySparseMap, "sparse depth has no valid cell");
  DepthMap out = in;
  for (int row = 0; row < in.height; ++row) {
    for (int col = 0; col < in.width; ++col) {
      const int cell = row * in.width + col;
      if (in.valid[cell]) continue;
      long best = std::numeric_limits<long>::max();
      int best_src = sources.front();
      for (int s : sources) {
        const long dr = s / in.width - row;
        const long dc = s % in.width - col;
        const long d2 = dr * dr + dc * dc;
        if (d2 < best) {
          best = d2;
          best_src = s;
        }
      }
      out.depth[cell] = in.depth[best_src];
      out.valid[cell] = 1;
    }
  }
  return out;
}

std::vector<Vec3> sample_surface_points(const SimScene& scene, int per_object, int ground, double ground_radius,
                                        Rng& rng) {
  std::vector<Vec3> pts;
  auto sphere_dir = [&rng]() {
    Vec3 d;
    do {
      d = Vec3(rng.normal(), rng.normal(), rng.normal());
    } while (d.squaredNorm() < 1e-12);
    return Vec3(d.normalized());
  };
  for (const auto& obj : scene.objects) {
    const Primitive& prim = scene.primitives[obj.primitive];
    for (int i = 0; i < per_object; ++i) {
      if (const auto* s = std::get_if<Sphere>(&prim)) {
        pts.push_back(s->center + s->radius * sphere_dir());
      } else if (const auto* b = std::get_if<Box>(&prim)) {
        const Vec3 e = b->max - b->min;
        const double areas[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
        double pick = rng.uniform() * (areas[0] + areas[1] + areas[2]);
        int axis = 0;
        while (axis < 2 && pick > areas[axis]) pick -= areas[axis++];
        Vec3 p(rng.uniform(b->min.x(), b->max.x()), rng.uniform(b->min.y(), b->max.y()),
               rng.uniform(b->min.z(), b->max.z()));
        p[axis] = rng.uniform() < 0.5 ? b->min[axis] : b->max[axis];
        pts.push_back(p);
      }
    }
  }
  for (const auto& prim : scene.primitives) {
    if (const auto* g = std::get_if<GroundPlane>(&prim)) {
      for (int i = 0; i < ground; ++i) {
        const double r = ground_radius * std::sqrt(rng.uniform());
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        pts.emplace_back(r * std::cos(a), r * std::sin(a), g->height);
      }
    }
  }
  return pts;
}

SimScene random_object_scene(const SceneOptions& opts, Rng& rng) {
  SimScene scene;
  scene.primitives.push_back(GroundPlane{opts.ground_height});
  std::vector<Sphere> placed;
  for (int k = 0; k < opts.objects; ++k) {
    Sphere s{};
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double az = rng.uniform(0.0, 2.0 * M_PI);
      const double range = rng.uniform(opts.min_range, opts.max_range);
      const double radius = rng.uniform(opts.min_radius, opts.max_radius);
      s = Sphere{Vec3(range * std::cos(az), range * std::sin(az), opts.ground_height + radius), radius};
      const bool clear = std::none_of(placed.begin(), placed.end(), [&](const Sphere& o) {
        return (o.center - s.center).norm() < o.radius + s.radius + 0.5;
      });
      if (clear) break;
    }
    placed.push_back(s);
    scene.primitives.push_back(s);
    scene.objects.push_back(SimObject{static_cast<int>(scene.primitives.size()) - 1, 1, s.center});
  }
  return scene;
}

namespace {

using nlohmann::json;

Vec3 vec3_field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) {
    throw Error(ErrorCode::kParse, path + "." + key + ": expected 3 numbers");
  }
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[key][k].is_number()) throw Error(ErrorCode::kParse, path + "." + key + ": expected 3 numbers");
    v[k] = j[key][k].get<double>();
  }
  return v;
}

double number_field(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number()) throw Error(ErrorCode::kParse, path + "." + key + ": expected a number");
  return j[key].get<double>();
}

}  // namespace

SimScene parse_scene(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, std::string("$: ") + e.what());
  }
  const json& list = doc.is_object() && doc.contains("primitives") ? doc["primitives"] : doc;
  if (!list.is_array()) throw Error(ErrorCode::kParse, "$: expected a list of primitives");
  SimScene scene;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string path = "primitives[" + std::to_string(i) + "]";
    const json& p = list[i];
    if (!p.is_object() || !p.contains("type") || !p["type"].is_string()) {
      throw Error(ErrorCode::kParse, path + ".type: missing primitive type");
    }
    const std::string type = p["type"].get<std::string>();
    Vec3 center;
    if (type == "sphere") {
      const Sphere s{vec3_field(p, "center", path), number_field(p, "radius", path)};
      if (!(s.radius > 0)) throw Error(ErrorCode::kParse, path + ".radius: must be > 0");
      scene.primitives.push_back(s);
      center = s.center;
    } else if (type == "box") {
      const Box b{vec3_field(p, "min", path), vec3_field(p, "max", path)};
      if (!(b.max.array() > b.min.array()).all()) throw Error(ErrorCode::kParse, path + ": max must exceed min");
      scene.primitives.push_back(b);
      center = 0.5 * (b.min + b.max);
    } else if (type == "ground") {
      scene.primitives.push_back(GroundPlane{number_field(p, "z", path)});
    } else {
      throw Error(ErrorCode::kParse, path + ".type: unknown primitive '" + type + "'");
    }
    if (p.contains("class")) {
      if (!p["class"].is_number_integer()) throw Error(ErrorCode::kParse, path + ".class: expected an integer");
      const int cls = p["class"].get<int>();
      if (cls > 0) {
        if (type == "ground") throw Error(ErrorCode::kParse, path + ".class: ground cannot be a target");
        scene.objects.push_back(SimObject{static_cast<int>(i), cls, center});
      }
    }
  }
  return scene;
}

SimScene load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scene file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string scene_to_json(const SimScene& scene) {
  json list = json::array();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    json p;
    std::visit(Overloaded{
                   [&](const Sphere& s) {
                     p["type"] = "sphere";
                     p["center"] = {s.center.x(), s.center.y(), s.center.z()};
                     p["radius"] = s.radius;
                   },
                   [&](const Box& b) {
                     p["type"] = "box";
                     p["min"] = {b.min.x(), b.min.y(), b.min.z()};
                     p["max"] = {b.max.x(), b.max.y(), b.max.z()};
                   },
                   [&](const GroundPlane& g) {
                     p["type"] = "ground";
                     p["z"] = g.height;
                   },
               },
               scene.primitives[i]);
    const int cls = scene.class_of(static_cast<int>(i));
    if (cls > 0) p["class"] = cls;
    list.push_back(p);
  }
  return list.dump(2);
}

}  // namespace pe3d
