// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace pe3d {

/// Per-cell probabilities over N_D depth bins, one column per cell (row-major
/// cell order). Each column is non-negative and sums to 1.
struct DepthDistribution {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd prob;  // N_D x (height * width)

  int bins() const { return static_cast<int>(prob.rows()); }
  int cells() const { return height * width; }

  /// Throws kShapeMismatch / kInvalidArgument when the invariants fail (sum
  /// tolerance 1e-9).
  void validate() const;

  /// Column-wise softmax of logits (N_D x cells).
  static DepthDistribution from_logits(int height, int width, const Eigen::MatrixXd& logits);
};

}  // namespace pe3d
