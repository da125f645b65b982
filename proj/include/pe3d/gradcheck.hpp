// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pe3d {

struct GradCheckResult {
  std::string op;
  int instances = 0;
  double max_rel_error = 0.0;  // max over instances of |a - n|_inf / max(|n|_inf, 1e-8)
  double tolerance = 0.0;
  bool pass = false;
};

/// Central finite differences (h = 1e-6) against the analytic gradients of
/// encode_point, fuse_depth (through the full depth loss), dfl_loss,
/// smooth_l1 and the toy detector loss, on `instances` seeded instances each.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int instances = 100);

}  // namespace pe3d
