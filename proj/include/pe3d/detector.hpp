// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <pe3d/depth_head.hpp>
#include <pe3d/encoders.hpp>
#include <pe3d/simulator.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pe3d {

/// Frozen stand-in for backbone output: a random embedding of the surface
/// class plus a random direction scaled by normalized depth.
struct FeatureEmbedding {
  MatrixXd class_embed;  // C x classes (column 0 = scenery)
  VectorXd depth_dir;    // C
  double depth_scale = 61.0;

  static FeatureEmbedding init(int channels, int classes, std::uint64_t seed);
  int channels() const { return static_cast<int>(class_embed.rows()); }
  VectorXd feature(int class_id, double depth) const;
};

/// Image features of one view; mask marks cells without a surface hit.
struct FeatureGrid {
  int height = 0;
  int width = 0;
  MatrixXd values;  // C x cells
  CellMask mask;
};

FeatureGrid make_feature_grid(const Rendering& rendering, const SimScene& scene, const FeatureEmbedding& embed);

struct TokenRef {
  int view = 0;
  int cell = 0;
};

/// F + PE for all views flattened into one token sequence.
struct PointAwareFeatures {
  MatrixXd values;  // C x tokens
  CellMask mask;
  std::vector<TokenRef> tokens;

  int size() const { return static_cast<int>(values.cols()); }
};

/// Element-wise sum per view; masks are OR-combined. Views are concatenated
/// in the given order.
PointAwareFeatures fuse_features(const std::vector<FeatureGrid>& features, const std::vector<PEGrid>& pe);

/// One cross-attention layer: K queries attend over point-aware tokens and a
/// linear head with a sigmoid maps each attended vector to a normalized center.
struct DecoderState {
  MatrixXd content;  // C x K
  AnchorPoints anchors;
  MatrixXd wq;  // C x C
  MatrixXd wk;  // C x C
  MatrixXd wv;  // C x C
  Linear head;  // C -> 3

  static DecoderState init(int channels, int queries, std::uint64_t seed);
  int queries() const { return static_cast<int>(content.cols()); }
  int channels() const { return static_cast<int>(content.rows()); }
};

struct DecodeResult {
  Eigen::Matrix3Xd centers;  // normalized, one column per query
  MatrixXd attention;        // K x tokens; masked tokens get weight 0
};

/// Queries are content + encoded anchors (anchor_pe is C x K).
DecodeResult decode(const DecoderState& state, const MatrixXd& anchor_pe, const PointAwareFeatures& feats);
DecodeResult decode(const DecoderState& state, const Mlp& anchor_mlp, const SineSpec& spec,
                    const PointAwareFeatures& feats);

/// Greedy nearest assignment: each target in order takes the nearest unused
/// prediction. Returns the prediction index per target.
std::vector<int> greedy_assign(const Eigen::Matrix3Xd& predictions, const std::vector<Vec3>& targets);

/// Everything that is trained: the PE generator of the chosen variant, the
/// anchor encoder (aliasing the PE MLP when shared) and the decoder.
struct ToyModel {
  PeVariant variant = PeVariant::kOraclePoint;
  SineSpec spec;
  std::optional<Mlp> pe_mlp;     // absent for pe2d
  std::optional<Linear> reduce;  // topk only
  bool shared_anchor = false;
  Mlp anchor_mlp;  // used when !shared_anchor
  DecoderState decoder;

  const Mlp& anchor_encoder() const { return shared_anchor ? *pe_mlp : anchor_mlp; }

  void axpy(double alpha, const ToyModel& grad);
  ToyModel zeros_like() const;
};

/// A named view of one contiguous parameter block, for gradient checks and
/// updates.
struct ParamBlock {
  std::string group;
  double* data;
  Eigen::Index size;
};
std::vector<ParamBlock> parameter_blocks(ToyModel& model);

/// Training data after all fixed preprocessing. PE inputs live in shared
/// column blocks; each scene's tokens index into them so rig-static encodings
/// are evaluated once per step.
struct ToyDataset {
  std::vector<MatrixXd> pe_blocks;  // variant inputs, one column per PE source
  struct Scene {
    MatrixXd features;             // C x tokens (valid tokens only)
    std::vector<int> pe_column;    // per token, column into pe_blocks
    std::vector<TokenRef> tokens;  // per token, view and cell
    std::vector<Vec3> targets;     // normalized object centers
  };
  std::vector<Scene> scenes;
  PerceptionRegion region;
};

struct LossResult {
  double loss = 0.0;
  double error_m = 0.0;
};

/// Mean squared normalized-center error over all targets, plus the mean
/// metric center error. Fills `grad` (same shape as `model`) when given.
LossResult toy_loss(const ToyModel& model, const ToyDataset& data, ToyModel* grad = nullptr);

/// Defaults are the desk-scale acceptance configuration: coarse cells and
/// objects large enough to cover at least one cell at the far range.
struct TrainConfig {
  double lr = 0.3;
  int steps = 2000;
  std::uint64_t seed = 0;
  PeVariant variant = PeVariant::kOraclePoint;
  EncoderSharing sharing = EncoderSharing::kShared;

  DepthBins ray_bins = make_bins(BinMethod::kUD, 1.0, 61.0, 64);
  double fixed_depth = 15.0;
  int topk = 5;

  int channels = 64;
  int hidden = 256;
  int queries = 1;

  int scenes = 16;
  int stride = 64;
  SceneOptions scene{-1.8, 8.0, 20.0, 1.5, 2.5, 1};
  RigOptions rig;
  PerceptionRegion region;

  DepthBins head_bins = make_bins(BinMethod::kUD, 1.0, 61.0, 16);
  DepthHeadTrainConfig depth_head;

  /// Throws kInvalidArgument on lr <= 0, steps < 0, or inconsistent sizes.
  void validate() const;
  SineSpec sine() const { return SineSpec{channels / 2}; }
};

ToyModel init_model(const TrainConfig& cfg);

/// Renders the scenes through the rig and builds the variant's PE inputs. For
/// depth-point and topk a depth head is trained first on the same features.
ToyDataset build_dataset(const std::vector<SimScene>& scenes, const std::vector<CameraParams>& cams,
                         const TrainConfig& cfg);

std::vector<SimScene> make_scenes(const TrainConfig& cfg);

struct TrainResult {
  ToyModel model;
  double initial_error_m = 0.0;
  double final_error_m = 0.0;
  std::vector<double> loss_history;  // loss before each step, plus the final loss
};

/// Full-batch gradient descent (no momentum). Anchors are clamped back into
/// [0,1]^3 after each step.
TrainResult train_model(ToyModel model, const ToyDataset& data, const TrainConfig& cfg);

/// Convenience wrapper: scenes + default rig -> dataset -> trained model.
TrainResult train_toy(const std::vector<SimScene>& scenes, const TrainConfig& cfg);

}  // namespace pe3d
