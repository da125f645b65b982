// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/encoders.hpp>
#include <pe3d/error.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pe3d {

void SineSpec::validate() const {
  if (half_dim <= 0 || half_dim % 2 != 0) throw Error(ErrorCode::kInvalidArgument, "half_dim must be even and > 0");
  if (!(temperature > 1.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be > 1");
}

double SineSpec::frequency(int pair) const {
  return scale / std::pow(temperature, 2.0 * pair / half_dim);
}

VectorXd sine_encode(double x, const SineSpec& spec) {
  VectorXd out(spec.half_dim);
  for (int k = 0; k < spec.half_dim / 2; ++k) {
    const double a = x * spec.frequency(k);
    out(2 * k) = std::sin(a);
    out(2 * k + 1) = std::cos(a);
  }
  return out;
}

VectorXd sine_encode_derivative(double x, const SineSpec& spec) {
  VectorXd out(spec.half_dim);
  for (int k = 0; k < spec.half_dim / 2; ++k) {
    const double w = spec.frequency(k);
    out(2 * k) = w * std::cos(x * w);
    out(2 * k + 1) = -w * std::sin(x * w);
  }
  return out;
}

VectorXd point_sine_features(const Vec3& p, const SineSpec& spec) {
  const int h = spec.half_dim;
  VectorXd out(3 * h);
  for (int c = 0; c < 3; ++c) out.segment(c * h, h) = sine_encode(p[c], spec);
  return out;
}

MatrixXd sine_features(const Eigen::Matrix3Xd& points, const SineSpec& spec) {
  MatrixXd out(3 * spec.half_dim, points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) out.col(j) = point_sine_features(points.col(j), spec);
  return out;
}

Eigen::Matrix3Xd sine_features_backward(const Eigen::Matrix3Xd& points, const MatrixXd& dfeat, const SineSpec& spec) {
  const int h = spec.half_dim;
  Eigen::Matrix3Xd grad(3, points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (int c = 0; c < 3; ++c) {
      grad(c, j) = sine_encode_derivative(points(c, j), spec).dot(dfeat.col(j).segment(c * h, h));
    }
  }
  return grad;
}

VectorXd encode_point(const Vec3& p, const Mlp& mlp, const SineSpec& spec) {
  return mlp.forward(point_sine_features(p, spec));
}

PointEncodeGrad encode_point_backward(const Vec3& p, const Mlp& mlp, const SineSpec& spec, const VectorXd& upstream) {
  const MatrixXd x = point_sine_features(p, spec);
  Mlp::Cache cache;
  mlp.forward(x, &cache);
  PointEncodeGrad g{Vec3::Zero(), mlp.zeros_like()};
  const MatrixXd dx = mlp.backward(x, cache, MatrixXd(upstream), g.grad_mlp);
  Eigen::Matrix3Xd pm(3, 1);
  pm.col(0) = p;
  g.grad_p = sine_features_backward(pm, dx, spec).col(0);
  return g;
}

std::string_view to_string(PeVariant v) {
  switch (v) {
    case PeVariant::kPe2d: return "pe2d";
    case PeVariant::kCameraRay: return "camera-ray";
    case PeVariant::kLidarRay: return "lidar-ray";
    case PeVariant::kOraclePoint: return "oracle-point";
    case PeVariant::kDepthPoint: return "depth-point";
    case PeVariant::kTopk: return "topk";
  }
  return "?";
}

PeVariant parse_pe_variant(std::string_view s) {
  for (PeVariant v : {PeVariant::kPe2d, PeVariant::kCameraRay, PeVariant::kLidarRay, PeVariant::kOraclePoint,
                      PeVariant::kDepthPoint, PeVariant::kTopk}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown PE variant '" + std::string(s) + "'");
}

MatrixXd encode_columns(const MatrixXd& inputs, const Mlp& mlp) {
  MatrixXd out(mlp.out(), inputs.cols());
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) out.col(j) = mlp.forward(VectorXd(inputs.col(j)));
  return out;
}

MatrixXd ray_inputs(const CameraParams& cam, const GridSpec& grid, const DepthBins& bins, const SineSpec& spec,
                    const PerceptionRegion& region) {
  spec.validate();
  region.validate();
  const int nd = bins.count();
  const int block = 3 * spec.half_dim;
  MatrixXd x(block * nd, grid.cells());
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const int cell = row * grid.width + col;
      for (int j = 0; j < nd; ++j) {
        Vec3 p = normalize_point(back_project(grid.pixel_u(col), grid.pixel_v(row), bins.centers[j], cam), region);
        clamp_unit(p);
        x.col(cell).segment(j * block, block) = point_sine_features(p, spec);
      }
    }
  }
  return x;
}

MatrixXd point_inputs(const PointGrid3D& normalized, const SineSpec& spec) {
  spec.validate();
  MatrixXd x(3 * spec.half_dim, normalized.points.size());
  for (std::size_t i = 0; i < normalized.points.size(); ++i) {
    x.col(static_cast<Eigen::Index>(i)) = point_sine_features(normalized.points[i], spec);
  }
  return x;
}

PEGrid pe2d(int height, int width, const SineSpec& spec) {
  spec.validate();
  PEGrid g{PeVariant::kPe2d, height, width, MatrixXd(2 * spec.half_dim, height * width),
           std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0)};
  for (int row = 0; row < height; ++row) {
    for (int col = 0; col < width; ++col) {
      const int cell = row * width + col;
      g.values.col(cell).head(spec.half_dim) = sine_encode((col + 0.5) / width, spec);
      g.values.col(cell).tail(spec.half_dim) = sine_encode((row + 0.5) / height, spec);
    }
  }
  return g;
}

namespace {

void check_mlp_input(const Mlp& mlp, Eigen::Index width, const char* what) {
  if (mlp.in() != width) {
    throw Error(ErrorCode::kShapeMismatch, std::string(what) + ": MLP input width " + std::to_string(mlp.in()) +
                                               " != " + std::to_string(width));
  }
}

}  // namespace

PEGrid pe_camera_ray(const CameraParams& cam, const GridSpec& grid, const DepthBins& bins, const Mlp& mlp_ray,
                     const SineSpec& spec, const PerceptionRegion& region) {
  const MatrixXd x = ray_inputs(cam, grid, bins, spec, region);
  check_mlp_input(mlp_ray, x.rows(), "pe_camera_ray");
  // A ray is defined for every cell, so nothing is masked.
  return PEGrid{PeVariant::kCameraRay, grid.height, grid.width, encode_columns(x, mlp_ray),
                std::vector<std::uint8_t>(grid.cells(), 0)};
}

PEGrid pe_lidar_ray(const CameraParams& cam, const GridSpec& grid, double fixed_d, const Mlp& mlp,
                    const SineSpec& spec, const PerceptionRegion& region) {
  PEGrid g = pe_camera_ray(cam, grid, DepthBins::single(fixed_d), mlp, spec, region);
  g.variant = PeVariant::kLidarRay;
  return g;
}

namespace {

PEGrid point_grid_pe(PeVariant variant, const DepthMap& depth, const CameraParams& cam, double stride,
                     const PerceptionRegion& region, const Mlp& mlp, const SineSpec& spec) {
  const PointGrid3D pts = normalize_grid(back_project_grid(depth, cam, stride), region);
  const MatrixXd x = point_inputs(pts, spec);
  check_mlp_input(mlp, x.rows(), "point PE");
  return PEGrid{variant, depth.height, depth.width, encode_columns(x, mlp), pts.mask};
}

}  // namespace

PEGrid pe_oracle_point(const DepthMap& gt_depth, const CameraParams& cam, double stride,
                       const PerceptionRegion& region, const Mlp& mlp, const SineSpec& spec) {
  return point_grid_pe(PeVariant::kOraclePoint, gt_depth, cam, stride, region, mlp, spec);
}

PEGrid pe_depth_point(const DepthMap& pred_depth, const CameraParams& cam, double stride,
                      const PerceptionRegion& region, const Mlp& mlp, const SineSpec& spec) {
  return point_grid_pe(PeVariant::kDepthPoint, pred_depth, cam, stride, region, mlp, spec);
}

TopkEncoder TopkEncoder::init(int k, int sine_width, int hidden, int channels, std::uint64_t seed) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  TopkEncoder e;
  e.k = k;
  e.point = Mlp::init(sine_width, hidden, channels, seed);
  Rng rng(derive_seed(seed, 0x7095));
  e.reduce = Linear::init(k * channels, channels, rng);
  return e;
}

std::vector<int> topk_bins(const Eigen::Ref<const VectorXd>& prob, int k) {
  if (k > prob.size()) throw Error(ErrorCode::kKTooLarge, "k exceeds the number of bins");
  std::vector<int> idx(prob.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return prob(a) > prob(b); });
  idx.resize(k);
  return idx;
}

std::vector<MatrixXd> topk_inputs(const DepthDistribution& dist, const DepthBins& bins, int k,
                                  const CameraParams& cam, double stride, const PerceptionRegion& region,
                                  const SineSpec& spec) {
  spec.validate();
  region.validate();
  if (dist.bins() != bins.count()) throw Error(ErrorCode::kShapeMismatch, "distribution and bins disagree on N_D");
  if (k > bins.count()) throw Error(ErrorCode::kKTooLarge, "k exceeds N_D");
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<MatrixXd> blocks(k, MatrixXd(3 * spec.half_dim, dist.cells()));
  for (int row = 0; row < dist.height; ++row) {
    for (int col = 0; col < dist.width; ++col) {
      const int cell = row * dist.width + col;
      const auto order = topk_bins(dist.prob.col(cell), k);
      for (int j = 0; j < k; ++j) {
        Vec3 p = normalize_point(back_project((col + 0.5) * stride, (row + 0.5) * stride, bins.centers[order[j]], cam),
                                 region);
        clamp_unit(p);
        blocks[j].col(cell) = point_sine_features(p, spec);
      }
    }
  }
  return blocks;
}

PEGrid pe_topk(const DepthDistribution& dist, const DepthBins& bins, int k, const CameraParams& cam, double stride,
               const PerceptionRegion& region, const TopkEncoder& enc, const SineSpec& spec) {
  if (k != enc.k) throw Error(ErrorCode::kShapeMismatch, "encoder was built for a different k");
  const auto blocks = topk_inputs(dist, bins, k, cam, stride, region, spec);
  const int c = enc.point.out();
  PEGrid g{PeVariant::kTopk, dist.height, dist.width, MatrixXd(c, dist.cells()),
           std::vector<std::uint8_t>(dist.cells(), 0)};
  VectorXd cat(k * c);
  for (int cell = 0; cell < dist.cells(); ++cell) {
    for (int j = 0; j < k; ++j) cat.segment(j * c, c) = enc.point.forward(VectorXd(blocks[j].col(cell)));
    g.values.col(cell) = enc.reduce.weight * cat + enc.reduce.bias;
  }
  return g;
}

void AnchorPoints::validate() const {
  for (const auto& p : points) {
    if (!((p.array() >= 0.0).all() && (p.array() <= 1.0).all())) {
      throw Error(ErrorCode::kInvalidArgument, "anchor coordinates must lie in [0,1]");
    }
  }
}

AnchorPoints AnchorPoints::random(int count, Rng& rng) {
  AnchorPoints a;
  for (int i = 0; i < count; ++i) {
    const double x = rng.uniform();
    const double y = rng.uniform();
    const double z = rng.uniform();
    a.points.emplace_back(x, y, z);
  }
  return a;
}

Mlp anchor_encoder(const Mlp& feature_mlp, EncoderSharing sharing, std::uint64_t seed) {
  if (sharing == EncoderSharing::kShared) return feature_mlp;
  return Mlp::init(feature_mlp.in(), feature_mlp.hidden(), feature_mlp.out(), seed);
}

MatrixXd encode_anchors(const AnchorPoints& anchors, const Mlp& mlp, const SineSpec& spec) {
  anchors.validate();
  MatrixXd out(anchors.points.size(), mlp.out());
  for (std::size_t k = 0; k < anchors.points.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = encode_point(anchors.points[k], mlp, spec).transpose();
  }
  return out;
}

}  // namespace pe3d
