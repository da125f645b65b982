// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/depth_bins.hpp>
#include <pe3d/depth_distribution.hpp>
#include <pe3d/geometry.hpp>
#include <pe3d/nn.hpp>

#include <cstdint>
#include <string_view>
#include <vector>

namespace pe3d {

/// Sine/cosine coordinate encoding of one scalar into half_dim values.
struct SineSpec {
  int half_dim = 32;
  double temperature = 10000.0;
  double scale = 2.0 * M_PI;

  void validate() const;
  /// Angular frequency of pair k: scale / temperature^(2k / half_dim).
  double frequency(int pair) const;
};

/// (sin(x w_0), cos(x w_0), sin(x w_1), cos(x w_1), ...).
VectorXd sine_encode(double x, const SineSpec& spec);
/// Elementwise derivative of sine_encode with respect to x.
VectorXd sine_encode_derivative(double x, const SineSpec& spec);

/// Concatenated sine encodings of the three coordinates (3 * half_dim values).
VectorXd point_sine_features(const Vec3& p, const SineSpec& spec);

/// MLP(Cat(Sine(x), Sine(y), Sine(z))). `mlp` maps 3 * half_dim -> C.
VectorXd encode_point(const Vec3& p, const Mlp& mlp, const SineSpec& spec);

struct PointEncodeGrad {
  Vec3 grad_p;
  Mlp grad_mlp;
};

/// Chain rule through the MLP, ReLU, concatenation and sine for one point.
PointEncodeGrad encode_point_backward(const Vec3& p, const Mlp& mlp, const SineSpec& spec, const VectorXd& upstream);

/// Adds d(points) contributions from dL/d(sine features) for a batch of points
/// (one column of `dfeat` per point).
Eigen::Matrix3Xd sine_features_backward(const Eigen::Matrix3Xd& points, const MatrixXd& dfeat, const SineSpec& spec);
MatrixXd sine_features(const Eigen::Matrix3Xd& points, const SineSpec& spec);

enum class PeVariant { kPe2d, kCameraRay, kLidarRay, kOraclePoint, kDepthPoint, kTopk };

std::string_view to_string(PeVariant v);
PeVariant parse_pe_variant(std::string_view s);

/// Per-cell C-vectors of one view. values is C x (height * width), cells in
/// row-major order.
struct PEGrid {
  PeVariant variant = PeVariant::kPe2d;
  int height = 0;
  int width = 0;
  MatrixXd values;
  std::vector<std::uint8_t> mask;

  int channels() const { return static_cast<int>(values.rows()); }
  int cells() const { return height * width; }
};

/// Runs the MLP column by column. Each column goes through the same
/// matrix-vector path, so a vector encoded here is bitwise identical to
/// encode_point on the same input regardless of batch size.
MatrixXd encode_columns(const MatrixXd& inputs, const Mlp& mlp);

/// Sine inputs for ray-style encodings: per cell, the sine features of every
/// bin point in ascending depth order, normalized and clamped into the region.
MatrixXd ray_inputs(const CameraParams& cam, const GridSpec& grid, const DepthBins& bins, const SineSpec& spec,
                    const PerceptionRegion& region);

/// Sine inputs for a normalized point grid (3 * half_dim x cells).
MatrixXd point_inputs(const PointGrid3D& normalized, const SineSpec& spec);

/// Image-plane encoding of normalized (u, v); uses no camera parameters.
PEGrid pe2d(int height, int width, const SineSpec& spec);

/// Camera-ray encoding: `mlp_ray` maps 3 * N_D * half_dim -> C.
PEGrid pe_camera_ray(const CameraParams& cam, const GridSpec& grid, const DepthBins& bins, const Mlp& mlp_ray,
                     const SineSpec& spec, const PerceptionRegion& region);

/// Single fixed-depth point per cell; identical to pe_camera_ray with one bin.
PEGrid pe_lidar_ray(const CameraParams& cam, const GridSpec& grid, double fixed_d, const Mlp& mlp,
                    const SineSpec& spec, const PerceptionRegion& region);

/// back_project -> normalize -> encode. Cells without depth or outside the
/// region are masked (their PE comes from the clamped point).
PEGrid pe_oracle_point(const DepthMap& gt_depth, const CameraParams& cam, double stride,
                       const PerceptionRegion& region, const Mlp& mlp, const SineSpec& spec);
PEGrid pe_depth_point(const DepthMap& pred_depth, const CameraParams& cam, double stride,
                      const PerceptionRegion& region, const Mlp& mlp, const SineSpec& spec);

/// Point encoder shared by the k points plus a linear reduction k*C -> C.
struct TopkEncoder {
  Mlp point;
  Linear reduce;
  int k = 5;

  static TopkEncoder init(int k, int sine_width, int hidden, int channels, std::uint64_t seed);
};

/// Indices of the k most probable bins in descending probability (ties go to
/// the lower index).
std::vector<int> topk_bins(const Eigen::Ref<const VectorXd>& prob, int k);

/// Per-cell sine inputs for the top-k points: k blocks, block j holding the
/// j-th most probable point of every cell.
std::vector<MatrixXd> topk_inputs(const DepthDistribution& dist, const DepthBins& bins, int k,
                                  const CameraParams& cam, double stride, const PerceptionRegion& region,
                                  const SineSpec& spec);

PEGrid pe_topk(const DepthDistribution& dist, const DepthBins& bins, int k, const CameraParams& cam, double stride,
               const PerceptionRegion& region, const TopkEncoder& enc, const SineSpec& spec);

/// Learnable query anchors in normalized [0,1]^3.
struct AnchorPoints {
  std::vector<Vec3> points;

  void validate() const;
  static AnchorPoints random(int count, Rng& rng);
};

enum class EncoderSharing { kShared, kSeparated };

/// The MLP used for anchors: the feature MLP itself when shared, a fresh
/// initialization from `seed` when separated.
Mlp anchor_encoder(const Mlp& feature_mlp, EncoderSharing sharing, std::uint64_t seed);

/// K x C matrix, row k = encode_point(anchor k).
MatrixXd encode_anchors(const AnchorPoints& anchors, const Mlp& mlp, const SineSpec& spec);

}  // namespace pe3d
