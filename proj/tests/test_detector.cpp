// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/detector.hpp>
#include <pe3d/error.hpp>
#include <pe3d/gradcheck.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace pe3d {
namespace {

PointAwareFeatures tokens(const MatrixXd& values, CellMask mask = {}) {
  if (mask.empty()) mask.assign(values.cols(), 0);
  return PointAwareFeatures{values, mask, {}};
}

TEST(Attention, SingleTokenGetsAllWeight) {
  const DecoderState s = DecoderState::init(8, 3, 1);
  Rng rng(1);
  MatrixXd f(8, 1);
  for (int i = 0; i < 8; ++i) f(i) = rng.normal();
  const DecodeResult r = decode(s, MatrixXd::Zero(8, 3), tokens(f));
  EXPECT_EQ(r.attention, MatrixXd::Ones(3, 1));
  EXPECT_GE(r.centers.minCoeff(), 0.0);
  EXPECT_LE(r.centers.maxCoeff(), 1.0);
}

TEST(Attention, IdenticalKeysGiveUniformWeights) {
  const DecoderState s = DecoderState::init(8, 2, 2);
  const MatrixXd f = VectorXd::LinSpaced(8, -1, 1).replicate(1, 5);
  const DecodeResult r = decode(s, MatrixXd::Zero(8, 2), tokens(f));
  EXPECT_LT((r.attention.array() - 0.2).abs().maxCoeff(), 1e-15);
}

TEST(Attention, MaskedTokensAreIgnored) {
  const DecoderState s = DecoderState::init(8, 2, 3);
  Rng rng(3);
  MatrixXd f(8, 4);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  const DecodeResult masked = decode(s, MatrixXd::Zero(8, 2), tokens(f, {0, 1, 0, 1}));
  EXPECT_EQ(masked.attention(0, 1), 0.0);
  EXPECT_EQ(masked.attention(1, 3), 0.0);
  EXPECT_NEAR(masked.attention.row(0).sum(), 1.0, 1e-15);
  MatrixXd kept(8, 2);
  kept << f.col(0), f.col(2);
  const DecodeResult compact = decode(s, MatrixXd::Zero(8, 2), tokens(kept));
  EXPECT_LT((masked.centers - compact.centers).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, AllMaskedIsAnError) {
  const DecoderState s = DecoderState::init(8, 1, 4);
  try {
    decode(s, MatrixXd::Zero(8, 1), tokens(MatrixXd::Ones(8, 3), {1, 1, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kAllTokensMasked);
  }
}

TEST(Attention, ShapeChecks) {
  const DecoderState s = DecoderState::init(8, 2, 5);
  EXPECT_THROW(decode(s, MatrixXd::Zero(8, 3), tokens(MatrixXd::Ones(8, 1))), Error);
  EXPECT_THROW(decode(s, MatrixXd::Zero(8, 2), tokens(MatrixXd::Ones(4, 1))), Error);
}

TEST(GreedyAssign, TargetsTakeNearestUnusedPrediction) {
  Eigen::Matrix3Xd p(3, 3);
  p << 0.1, 0.5, 0.9, 0.1, 0.5, 0.9, 0.1, 0.5, 0.9;
  EXPECT_EQ(greedy_assign(p, {Vec3(0.52, 0.5, 0.5), Vec3(0.45, 0.45, 0.45)}), (std::vector<int>{1, 0}));
  EXPECT_EQ(greedy_assign(p, {Vec3(1, 1, 1)}), (std::vector<int>{2}));
  EXPECT_THROW(greedy_assign(p, std::vector<Vec3>(4, Vec3::Zero())), Error);
}

TEST(FuseFeatures, SumsAndCombinesMasks) {
  FeatureGrid f{1, 2, MatrixXd::Ones(4, 2), {0, 1}};
  PEGrid pe{PeVariant::kOraclePoint, 1, 2, 2.0 * MatrixXd::Ones(4, 2), {1, 0}};
  const PointAwareFeatures out = fuse_features({f, f}, {pe, pe});
  EXPECT_EQ(out.size(), 4);
  EXPECT_EQ(out.values, 3.0 * MatrixXd::Ones(4, 4));
  EXPECT_EQ(out.mask, (CellMask{1, 1, 1, 1}));
  EXPECT_EQ(out.tokens[3].view, 1);
  EXPECT_EQ(out.tokens[3].cell, 1);
  pe.values = MatrixXd::Ones(4, 3);
  pe.width = 3;
  EXPECT_THROW(fuse_features({f}, {pe}), Error);
}

TEST(FeatureGrid, ClassAndDepthDriven) {
  const FeatureEmbedding e = FeatureEmbedding::init(8, 2, 7);
  EXPECT_LT((e.feature(1, 30.5) - e.class_embed.col(1) - 0.5 * e.depth_dir).cwiseAbs().maxCoeff(), 1e-15);
  const SimScene scene{{GroundPlane{-1.8}, Sphere{Vec3(0, 10, -0.3), 1.5}}, {{1, 1, Vec3(0, 10, -0.3)}}};
  const CameraParams cam = default_rig()[0];
  const Rendering r = render(scene, cam, GridSpec::for_camera(cam, 32));
  const FeatureGrid g = make_feature_grid(r, scene, e);
  for (int i = 0; i < g.height * g.width; ++i) {
    EXPECT_EQ(g.mask[i] != 0, r.hit[i] < 0);
    if (r.hit[i] >= 0) {
      EXPECT_EQ(VectorXd(g.values.col(i)), e.feature(scene.class_of(r.hit[i]), r.depth.depth[i]));
    }
  }
}

TrainConfig micro_config(PeVariant v, EncoderSharing sharing = EncoderSharing::kShared) {
  TrainConfig cfg;
  cfg.variant = v;
  cfg.sharing = sharing;
  cfg.channels = 8;
  cfg.hidden = 16;
  cfg.queries = 2;
  cfg.scenes = 3;
  cfg.stride = 128;
  cfg.ray_bins = make_bins(BinMethod::kUD, 1, 61, 16);
  cfg.topk = 3;
  cfg.head_bins = make_bins(BinMethod::kUD, 1, 61, 6);
  cfg.depth_head.steps = 20;
  cfg.seed = 11;
  return cfg;
}

ToyDataset micro_dataset(const TrainConfig& cfg) {
  return build_dataset(make_scenes(cfg), default_rig(cfg.rig), cfg);
}

struct VariantCase {
  PeVariant variant;
  EncoderSharing sharing;
};

class ToyLossGradient : public ::testing::TestWithParam<VariantCase> {};

TEST_P(ToyLossGradient, MatchesFiniteDifferences) {
  const TrainConfig cfg = micro_config(GetParam().variant, GetParam().sharing);
  const ToyDataset data = micro_dataset(cfg);
  ToyModel model = init_model(cfg);
  ToyModel grad = model.zeros_like();
  toy_loss(model, data, &grad);
  auto blocks = parameter_blocks(model);
  const auto gblocks = parameter_blocks(grad);
  Rng rng(5);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (int trial = 0; trial < 6; ++trial) {
      const Eigen::Index i = static_cast<Eigen::Index>(rng.index(blocks[b].size));
      double& w = blocks[b].data[i];
      const double saved = w;
      w = saved + 1e-6;
      const double hi = toy_loss(model, data).loss;
      w = saved - 1e-6;
      const double lo = toy_loss(model, data).loss;
      w = saved;
      const double fd = (hi - lo) / 2e-6;
      EXPECT_NEAR(gblocks[b].data[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << blocks[b].group << "[" << i << "]";
    }
  }
}

INSTANTIATE_TEST_SUITE_P(
    Variants, ToyLossGradient,
    ::testing::Values(VariantCase{PeVariant::kPe2d, EncoderSharing::kShared},
                      VariantCase{PeVariant::kOraclePoint, EncoderSharing::kShared},
                      VariantCase{PeVariant::kOraclePoint, EncoderSharing::kSeparated},
                      VariantCase{PeVariant::kCameraRay, EncoderSharing::kShared},
                      VariantCase{PeVariant::kLidarRay, EncoderSharing::kShared},
                      VariantCase{PeVariant::kDepthPoint, EncoderSharing::kShared},
                      VariantCase{PeVariant::kTopk, EncoderSharing::kSeparated}),
    [](const auto& info) {
      std::string name(to_string(info.param.variant));
      std::replace(name.begin(), name.end(), '-', '_');
      return name + (info.param.sharing == EncoderSharing::kShared ? "_shared" : "_separated");
    });

TEST(ToyLoss, AnchorsReceiveGradient) {
  for (auto sharing : {EncoderSharing::kShared, EncoderSharing::kSeparated}) {
    const TrainConfig cfg = micro_config(PeVariant::kOraclePoint, sharing);
    const ToyDataset data = micro_dataset(cfg);
    const ToyModel model = init_model(cfg);
    ToyModel grad = model.zeros_like();
    toy_loss(model, data, &grad);
    double norm = 0.0;
    for (const auto& a : grad.decoder.anchors.points) norm += a.squaredNorm();
    EXPECT_GT(norm, 0.0);
    for (const auto& b : parameter_blocks(grad)) {
      if (b.group == "pe_mlp" || b.group == "anchor_mlp") {
        EXPECT_GT(Eigen::Map<VectorXd>(b.data, b.size).squaredNorm(), 0.0) << b.group;
      }
    }
  }
}

TEST(ToyLoss, TokenOrderDoesNotMatter) {
  const TrainConfig cfg = micro_config(PeVariant::kOraclePoint);
  ToyDataset data = micro_dataset(cfg);
  const ToyModel model = init_model(cfg);
  const double before = toy_loss(model, data).loss;
  for (auto& scene : data.scenes) {
    std::vector<int> perm(scene.tokens.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + perm.size() / 3, perm.end());
    ToyDataset::Scene shuffled = scene;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.features.col(static_cast<Eigen::Index>(i)) = scene.features.col(perm[i]);
      shuffled.pe_column[i] = scene.pe_column[perm[i]];
      shuffled.tokens[i] = scene.tokens[perm[i]];
    }
    scene = shuffled;
  }
  EXPECT_NEAR(toy_loss(model, data).loss, before, 1e-12 * before);
}

TEST(Training, ZeroStepsIsDeterministicAndUntrained) {
  const TrainConfig cfg = [] {
    TrainConfig c = micro_config(PeVariant::kCameraRay);
    c.steps = 0;
    return c;
  }();
  const auto scenes = make_scenes(cfg);
  const TrainResult a = train_toy(scenes, cfg);
  const TrainResult b = train_toy(scenes, cfg);
  EXPECT_EQ(a.final_error_m, b.final_error_m);
  EXPECT_EQ(a.initial_error_m, a.final_error_m);
  EXPECT_EQ(a.model.pe_mlp->fc1.weight, init_model(cfg).pe_mlp->fc1.weight);
  EXPECT_EQ(a.loss_history.size(), 1u);
}

TEST(Training, SmallStepsDecreaseLossMonotonically) {
  TrainConfig cfg = micro_config(PeVariant::kOraclePoint);
  cfg.lr = 1e-3;
  cfg.steps = 25;
  const TrainResult r = train_toy(make_scenes(cfg), cfg);
  ASSERT_EQ(r.loss_history.size(), 26u);
  for (std::size_t i = 1; i < r.loss_history.size(); ++i) EXPECT_LE(r.loss_history[i], r.loss_history[i - 1]);
}

TEST(Training, SameSeedSameResult) {
  TrainConfig cfg = micro_config(PeVariant::kLidarRay);
  cfg.steps = 10;
  const TrainResult a = train_toy(make_scenes(cfg), cfg);
  const TrainResult b = train_toy(make_scenes(cfg), cfg);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.model.decoder.wq, b.model.decoder.wq);
}

// The wide-input reparametrization must reproduce plain gradient descent.
TEST(Training, CameraRayMatchesPlainGradientDescent) {
  TrainConfig cfg = micro_config(PeVariant::kCameraRay, EncoderSharing::kSeparated);
  cfg.lr = 0.3;
  cfg.steps = 30;
  const ToyDataset data = micro_dataset(cfg);
  ASSERT_EQ(data.pe_blocks.size(), 1u);
  ASSERT_GT(data.pe_blocks[0].rows(), data.pe_blocks[0].cols());

  const TrainResult fast = train_model(init_model(cfg), data, cfg);
  ToyModel plain = init_model(cfg);
  std::vector<double> history;
  for (int step = 0; step < cfg.steps; ++step) {
    ToyModel grad = plain.zeros_like();
    history.push_back(toy_loss(plain, data, &grad).loss);
    plain.axpy(-cfg.lr, grad);
    for (auto& a : plain.decoder.anchors.points) clamp_unit(a);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    EXPECT_NEAR(fast.loss_history[step], history[step], 1e-9 * history[step]) << "step " << step;
  }
  auto fb = parameter_blocks(const_cast<ToyModel&>(fast.model));
  auto pb = parameter_blocks(plain);
  ASSERT_EQ(fb.size(), pb.size());
  for (std::size_t b = 0; b < fb.size(); ++b) {
    const double diff =
        (Eigen::Map<VectorXd>(fb[b].data, fb[b].size) - Eigen::Map<VectorXd>(pb[b].data, pb[b].size))
            .cwiseAbs()
            .maxCoeff();
    EXPECT_LT(diff, 1e-9) << fb[b].group;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.steps = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.variant = PeVariant::kTopk;
  cfg.topk = 17;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kKTooLarge);
  }
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(GradCheck, AllOperationsPass) {
  for (const auto& r : run_gradchecks(3, 10)) {
    EXPECT_TRUE(r.pass) << r.op << " rel error " << r.max_rel_error;
    EXPECT_EQ(r.instances, 10);
  }
}

}  // namespace
}  // namespace pe3d
