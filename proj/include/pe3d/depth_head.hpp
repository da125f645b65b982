// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/depth_bins.hpp>
#include <pe3d/depth_distribution.hpp>
#include <pe3d/geometry.hpp>
#include <pe3d/nn.hpp>

#include <cstdint>
#include <vector>

namespace pe3d {

using CellMask = std::vector<std::uint8_t>;

/// Learnable fusion weight; the stored value is unconstrained and squashed
/// through a logistic sigmoid so alpha stays in (0, 1).
struct FusionWeight {
  double raw = 0.0;

  double value() const;
  /// d alpha / d raw.
  double derivative() const;
};

struct DepthLossWeights {
  double lambda_sm = 0.25;
  double lambda_dfl = 0.25;

  void validate() const;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// D^P = sum_i P_i d_i per cell.
DepthMap expected_depth(const DepthDistribution& dist, const DepthBins& bins);

/// D^pred = alpha D^R + (1 - alpha) D^P per cell. The result is valid where
/// both inputs are.
DepthMap fuse_depth(const DepthMap& regressed, const DepthMap& probabilistic, const FusionWeight& alpha);

/// Mean over valid cells of the smooth-L1 penalty with transition point beta.
double smooth_l1(const DepthMap& pred, const DepthMap& gt, double beta, const CellMask& valid);
/// Gradient of smooth_l1 with respect to pred (one entry per cell).
VectorXd smooth_l1_grad(const DepthMap& pred, const DepthMap& gt, double beta, const CellMask& valid);

/// Clamps valid gt depths into [d_min, d_max] (the documented DFL policy).
DepthMap clamp_to_bins(const DepthMap& gt, const DepthBins& bins);

/// Mean over valid cells of -w log P_i - (1 - w) log P_{i+1}, where (i, i+1, w)
/// brackets the gt depth. gt must already lie in the bin range.
double dfl_loss(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins, const CellMask& valid);
/// Gradient of dfl_loss with respect to the probabilities (N_D x cells).
MatrixXd dfl_grad_prob(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins, const CellMask& valid);
/// Gradient of dfl_loss with respect to the logits that produced `dist` by softmax.
MatrixXd dfl_grad_logits(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins,
                         const CellMask& valid);

/// Backpropagates a gradient on softmax outputs to its logits, column-wise.
MatrixXd softmax_backward(const MatrixXd& prob, const MatrixXd& grad_prob);

/// lambda_sm smooth_l1(pred, gt) + lambda_dfl dfl_loss(P, gt).
double depth_loss(const DepthMap& pred, const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins,
                  const DepthLossWeights& weights, const CellMask& valid, double beta = 1.0);

struct DepthLossGrad {
  double loss = 0.0;
  MatrixXd d_logits;    // N_D x cells
  VectorXd d_regressed;  // per cell
  double d_alpha_raw = 0.0;
};

/// Full forward and backward of the depth loss starting from the head's raw
/// outputs: logits -> P -> D^P, fused with D^R by alpha.
DepthLossGrad depth_loss_backward(int height, int width, const MatrixXd& logits, const VectorXd& regressed,
                                  const FusionWeight& alpha, const DepthMap& gt, const DepthBins& bins,
                                  const DepthLossWeights& weights, const CellMask& valid, double beta = 1.0);

/// Desk-scale depth head: a per-cell two-layer perceptron over image features
/// producing N_D logits and one regression output squashed into the bin range.
struct DepthHead {
  Mlp trunk;  // C_in -> hidden -> N_D + 1
  FusionWeight alpha;
  DepthBins bins;

  static DepthHead init(int in, int hidden, DepthBins bins, std::uint64_t seed);

  struct Output {
    MatrixXd logits;
    MatrixXd prob;
    VectorXd regressed;
    VectorXd expected;
    VectorXd fused;
  };

  /// features: C_in x cells.
  Output forward(const MatrixXd& features) const;

  /// Depth loss over the given cells and its parameter gradient.
  double loss_and_grad(const MatrixXd& features, const VectorXd& gt, const CellMask& valid,
                       const DepthLossWeights& weights, DepthHead* grad) const;
};

struct DepthHeadTrainConfig {
  int hidden = 64;
  int steps = 300;
  double lr = 0.05;
  std::uint64_t seed = 0;
  DepthLossWeights weights;
};

/// Full-batch gradient descent on the depth loss. `gt` is clamped to the bins
/// internally; cells with valid == 0 are ignored.
DepthHead train_depth_head(const MatrixXd& features, const VectorXd& gt, const CellMask& valid,
                           const DepthBins& bins, const DepthHeadTrainConfig& cfg);

}  // namespace pe3d
