// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/analysis.hpp>
#include <pe3d/encoders.hpp>
#include <pe3d/simulator.hpp>

#include <string>
#include <string_view>

namespace pe3d {

// Binary layouts (all integers u32, all reals f32, little-endian):
//   PE grid:   "PE3D\0" C H W, C*H*W values in channel, row, column order,
//              then H*W mask bytes.
//   Depth map: "DPTH" H W, H*W depths row-major, then H*W validity bytes.
// Readers throw kParse on malformed input.

std::string encode_pe_grid(const PEGrid& grid);
PEGrid decode_pe_grid(std::string_view bytes);

std::string encode_depth_map(const DepthMap& map);
DepthMap decode_depth_map(std::string_view bytes);

/// `view,u,v,similarity` per cell; values printed as f32 with %.9g so they
/// parse back exactly; masked cells are `nan`.
std::string similarity_to_csv(const SimilarityMap& map);
SimilarityMap similarity_from_csv(std::string_view text, const CellRef& reference);

/// Binary PGM (P5) of one view: [-1, 1] -> [0, 255], NaN -> 0.
std::string similarity_to_pgm(const ViewSimilarity& view);

/// {"objects":[{"primitive","class","center":[x,y,z]}]}.
std::string annotations_to_json(const SimScene& scene);

/// Whole-file helpers; throw kIo on failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace pe3d
