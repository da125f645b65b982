// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/depth_head.hpp>
#include <pe3d/encoders.hpp>
#include <pe3d/simulator.hpp>

#include <vector>

namespace pe3d {

/// A feature-grid cell of one view: column u, row v.
struct CellRef {
  int view = 0;
  int u = 0;
  int v = 0;
};

struct ViewSimilarity {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // row-major; NaN where masked or zero-norm
};

/// Cosine similarity of every cell's PE against one reference cell.
struct SimilarityMap {
  CellRef reference;
  std::vector<ViewSimilarity> views;
};

/// Throws kInvalidArgument for an out-of-range or masked reference and
/// kZeroReferenceVector when the reference PE norm is <= 1e-12.
SimilarityMap similarity_map(const std::vector<PEGrid>& pe, const CellRef& ref);

struct Cohesion {
  double object_mean = 0.0;
  double background_mean = 0.0;
  double margin = 0.0;
};

/// Mean similarity over object cells (excluding the reference) and over
/// background cells; NaN cells are skipped. Throws kEmptyRegion when either
/// set is empty.
Cohesion cohesion_metric(const SimilarityMap& map, const std::vector<CellMask>& object_mask);

/// Per-view mask of cells whose ray hits primitive `primitive`.
std::vector<CellMask> object_masks(const std::vector<Rendering>& renders, int primitive);

/// The cell nearest to the projected center of the object covering the most
/// cells, restricted to cells on that object. Throws kEmptyRegion when no
/// object is visible.
CellRef auto_object_reference(const SimScene& scene, const std::vector<CameraParams>& cams,
                              const std::vector<GridSpec>& grids, const std::vector<Rendering>& renders);

}  // namespace pe3d
