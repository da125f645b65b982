// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/analysis.hpp>
#include <pe3d/error.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace pe3d {

SimilarityMap similarity_map(const std::vector<PEGrid>& pe, const CellRef& ref) {
  if (ref.view < 0 || ref.view >= static_cast<int>(pe.size())) {
    throw Error(ErrorCode::kInvalidArgument, "ref.view: out of range");
  }
  const PEGrid& rg = pe[ref.view];
  if (ref.u < 0 || ref.u >= rg.width || ref.v < 0 || ref.v >= rg.height) {
    throw Error(ErrorCode::kInvalidArgument, "ref: cell outside the view's grid");
  }
  const int ref_cell = ref.v * rg.width + ref.u;
  if (!rg.mask.empty() && rg.mask[ref_cell]) throw Error(ErrorCode::kInvalidArgument, "ref: cell is masked");
  const VectorXd r = rg.values.col(ref_cell);
  const double r_norm = r.norm();
  if (!(r_norm > 1e-12)) throw Error(ErrorCode::kZeroReferenceVector, "reference PE has zero norm");

  SimilarityMap map{ref, {}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& g : pe) {
    if (g.values.rows() != rg.values.rows()) throw Error(ErrorCode::kShapeMismatch, "views differ in channels");
    ViewSimilarity vs{g.height, g.width, std::vector<double>(g.cells(), nan)};
    for (int i = 0; i < g.cells(); ++i) {
      if (!g.mask.empty() && g.mask[i]) continue;
      const double n = g.values.col(i).norm();
      if (!(n > 1e-12)) continue;
      vs.values[i] = g.values.col(i).dot(r) / (n * r_norm);
    }
    map.views.push_back(std::move(vs));
  }
  map.views[ref.view].values[ref_cell] = 1.0;
  return map;
}

Cohesion cohesion_metric(const SimilarityMap& map, const std::vector<CellMask>& object_mask) {
  if (object_mask.size() != map.views.size()) throw Error(ErrorCode::kShapeMismatch, "mask view count differs");
  double obj = 0.0, bg = 0.0;
  long n_obj = 0, n_bg = 0;
  for (std::size_t v = 0; v < map.views.size(); ++v) {
    const auto& vals = map.views[v].values;
    if (object_mask[v].size() != vals.size()) throw Error(ErrorCode::kShapeMismatch, "mask size differs");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (std::isnan(vals[i])) continue;
      const bool is_ref = static_cast<int>(v) == map.reference.view &&
                          static_cast<int>(i) == map.reference.v * map.views[v].width + map.reference.u;
      if (object_mask[v][i]) {
        if (is_ref) continue;
        obj += vals[i];
        ++n_obj;
      } else {
        bg += vals[i];
        ++n_bg;
      }
    }
  }
  if (n_obj == 0) throw Error(ErrorCode::kEmptyRegion, "no object cell besides the reference");
  if (n_bg == 0) throw Error(ErrorCode::kEmptyRegion, "no background cell");
  Cohesion c{obj / static_cast<double>(n_obj), bg / static_cast<double>(n_bg), 0.0};
  c.margin = c.object_mean - c.background_mean;
  return c;
}

std::vector<CellMask> object_masks(const std::vector<Rendering>& renders, int primitive) {
  std::vector<CellMask> masks;
  for (const auto& r : renders) {
    CellMask m(r.hit.size(), 0);
    for (std::size_t i = 0; i < r.hit.size(); ++i) m[i] = r.hit[i] == primitive ? 1 : 0;
    masks.push_back(std::move(m));
  }
  return masks;
}

CellRef auto_object_reference(const SimScene& scene, const std::vector<CameraParams>& cams,
                              const std::vector<GridSpec>& grids, const std::vector<Rendering>& renders) {
  if (cams.size() != grids.size() || cams.size() != renders.size()) {
    throw Error(ErrorCode::kShapeMismatch, "cameras, grids and renders differ in count");
  }
  int best_obj = -1, best_view = -1;
  long best_count = 0;
  for (std::size_t o = 0; o < scene.objects.size(); ++o) {
    long total = 0;
    int top_view = -1;
    long top_count = 0;
    for (std::size_t v = 0; v < renders.size(); ++v) {
      long n = 0;
      for (int h : renders[v].hit) n += h == scene.objects[o].primitive;
      total += n;
      if (n > top_count) {
        top_count = n;
        top_view = static_cast<int>(v);
      }
    }
    if (total > best_count) {
      best_count = total;
      best_obj = static_cast<int>(o);
      best_view = top_view;
    }
  }
  if (best_obj < 0) throw Error(ErrorCode::kEmptyRegion, "no object is visible");

  const SimObject& obj = scene.objects[best_obj];
  const GridSpec& g = grids[best_view];
  // Target in cell units; falls back to the grid center if the center is
  // behind the camera.
  double tu = 0.5 * g.width, tv = 0.5 * g.height;
  if (camera_depth(obj.center, cams[best_view]) > 1e-9) {
    const Projection p = project(obj.center, cams[best_view]);
    tu = p.u / g.stride - 0.5;
    tv = p.v / g.stride - 0.5;
  }
  CellRef ref{best_view, 0, 0};
  double best = std::numeric_limits<double>::infinity();
  for (int row = 0; row < g.height; ++row) {
    for (int col = 0; col < g.width; ++col) {
      if (renders[best_view].hit[row * g.width + col] != obj.primitive) continue;
      const double d = (col - tu) * (col - tu) + (row - tv) * (row - tv);
      if (d < best) {
        best = d;
        ref = CellRef{best_view, col, row};
      }
    }
  }
  return ref;
}

}  // namespace pe3d
