// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/geometry.hpp>

#include <string>
#include <vector>

namespace pe3d {

struct Rig {
  std::vector<CameraParams> cameras;
  PerceptionRegion region;
};

/// Parses `{"cameras":[{"name","width","height","K":[9],"R":[9],"T":[3]}],
/// "region":{"x":[min,max],"y":[..],"z":[..]}}`. Matrices are row-major. The
/// region is optional and defaults to PerceptionRegion{}.
///
/// Errors carry the JSON path of the offending field, e.g.
/// "cameras[2].R: rotation is not orthonormal".
Rig parse_rig(const std::string& json_text);
Rig load_rig(const std::string& path);

std::string rig_to_json(const Rig& rig);

}  // namespace pe3d
