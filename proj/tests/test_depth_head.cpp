// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/depth_head.hpp>
#include <pe3d/error.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace pe3d {
namespace {

DepthDistribution random_distribution(int cells, int nd, Rng& rng) {
  MatrixXd logits(nd, cells);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = 2.0 * rng.normal();
  return DepthDistribution::from_logits(1, cells, logits);
}

DepthMap row_map(const std::vector<double>& values) {
  DepthMap m(1, static_cast<int>(values.size()), 0.0, true);
  m.depth = values;
  return m;
}

CellMask all_valid(std::size_t n) { return CellMask(n, 1); }

TEST(ExpectedDepth, TwoBinMidpoint) {
  DepthDistribution d{1, 1, MatrixXd::Constant(2, 1, 0.5)};
  EXPECT_DOUBLE_EQ(expected_depth(d, make_bins(BinMethod::kUD, 1, 61, 2)).depth[0], 31.0);
}

TEST(ExpectedDepth, MatchesLoopOracle) {
  Rng rng(1);
  const DepthBins bins = make_bins(BinMethod::kSID, 1, 61, 7);
  const DepthDistribution dist = random_distribution(20, 7, rng);
  const DepthMap e = expected_depth(dist, bins);
  for (int c = 0; c < 20; ++c) {
    double want = 0.0;
    for (int i = 0; i < 7; ++i) want += dist.prob(i, c) * bins.centers[i];
    EXPECT_NEAR(e.depth[c], want, 1e-12);
    EXPECT_GE(e.depth[c], 1.0);
    EXPECT_LE(e.depth[c], 61.0);
  }
}

TEST(DepthDistribution, RejectsUnnormalizedColumns) {
  DepthDistribution d{1, 1, MatrixXd::Constant(2, 1, 0.6)};
  EXPECT_THROW(d.validate(), Error);
}

TEST(FuseDepth, DefaultWeightAveragesBranches) {
  const DepthMap fused = fuse_depth(row_map({10.0}), row_map({20.0}), FusionWeight{});
  EXPECT_DOUBLE_EQ(FusionWeight{}.value(), 0.5);
  EXPECT_DOUBLE_EQ(fused.depth[0], 15.0);
}

TEST(FuseDepth, AffineInAlphaAndValidityIsConjunction) {
  DepthMap r = row_map({3.0, 40.0, 7.0});
  DepthMap p = row_map({9.0, 12.0, 1.5});
  r.valid[2] = 0;
  for (double raw : {-3.0, -0.2, 0.0, 1.7}) {
    const FusionWeight w{raw};
    const double a = 1.0 / (1.0 + std::exp(-raw));
    EXPECT_NEAR(w.value(), a, 1e-15);
    EXPECT_NEAR(w.derivative(), a * (1 - a), 1e-15);
    const DepthMap f = fuse_depth(r, p, w);
    for (int i = 0; i < 2; ++i) EXPECT_NEAR(f.depth[i], a * r.depth[i] + (1 - a) * p.depth[i], 1e-12);
    EXPECT_EQ(f.valid, (std::vector<std::uint8_t>{1, 1, 0}));
  }
}

TEST(SmoothL1, QuadraticAndLinearRegimes) {
  const DepthMap gt = row_map({10.0, 10.0, 10.0});
  EXPECT_DOUBLE_EQ(smooth_l1(row_map({10.5, 10, 10}), gt, 1.0, all_valid(3)), 0.125 / 3);
  EXPECT_DOUBLE_EQ(smooth_l1(row_map({12, 10, 10}), gt, 1.0, all_valid(3)), 1.5 / 3);
  EXPECT_DOUBLE_EQ(smooth_l1(row_map({12, 10, 10}), gt, 1.0, CellMask{1, 0, 0}), 1.5);
  EXPECT_DOUBLE_EQ(smooth_l1(row_map({8, 100, 10}), gt, 1.0, CellMask{1, 0, 1}), 0.75);
  try {
    smooth_l1(gt, gt, 1.0, CellMask{0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoValidPixels);
  }
}

TEST(SmoothL1, GradientMatchesFiniteDifference) {
  Rng rng(2);
  DepthMap pred(1, 30), gt(1, 30, 0.0, true);
  for (int i = 0; i < 30; ++i) {
    pred.depth[i] = rng.uniform(0, 20);
    gt.depth[i] = rng.uniform(0, 20);
  }
  CellMask valid(30);
  for (auto& v : valid) v = rng.uniform() < 0.7;
  valid[0] = 1;
  const VectorXd g = smooth_l1_grad(pred, gt, 1.0, valid);
  for (int i = 0; i < 30; ++i) {
    DepthMap hi = pred, lo = pred;
    hi.depth[i] += 1e-6;
    lo.depth[i] -= 1e-6;
    const double fd = (smooth_l1(hi, gt, 1.0, valid) - smooth_l1(lo, gt, 1.0, valid)) / 2e-6;
    EXPECT_NEAR(g(i), fd, 1e-7);
  }
}

TEST(Dfl, UniformTwoBinsAtMidpointIsLn2) {
  DepthDistribution d{1, 1, MatrixXd::Constant(2, 1, 0.5)};
  EXPECT_NEAR(dfl_loss(d, row_map({31.0}), make_bins(BinMethod::kUD, 1, 61, 2), all_valid(1)), std::log(2.0), 1e-12);
}

TEST(Dfl, OneHotOnCenterIsZero) {
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 4);
  MatrixXd p = MatrixXd::Zero(4, 1);
  p(1, 0) = 1.0;
  EXPECT_NEAR(dfl_loss(DepthDistribution{1, 1, p}, row_map({21.0}), bins, all_valid(1)), 0.0, 1e-15);
}

TEST(Dfl, MatchesLoopOracleAndIsNonNegative) {
  Rng rng(3);
  const DepthBins bins = make_bins(BinMethod::kLID, 1, 61, 9);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthDistribution dist = random_distribution(15, 9, rng);
    std::vector<double> g(15);
    for (auto& x : g) x = rng.uniform(1, 61);
    double want = 0.0;
    for (int c = 0; c < 15; ++c) {
      int i = 0;
      while (i + 2 < 9 && bins.centers[i + 1] < g[c]) ++i;
      const double w = (bins.centers[i + 1] - g[c]) / (bins.centers[i + 1] - bins.centers[i]);
      want -= w * std::log(dist.prob(i, c)) + (1 - w) * std::log(dist.prob(i + 1, c));
    }
    const double got = dfl_loss(dist, row_map(g), bins, all_valid(15));
    EXPECT_NEAR(got, want / 15, 1e-10);
    EXPECT_GE(got, 0.0);
  }
}

TEST(Dfl, GradientOnLogitsMatchesFiniteDifference) {
  Rng rng(4);
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 6);
  MatrixXd logits(6, 4);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  const DepthMap gt = row_map({2.0, 17.5, 40.0, 60.0});
  const CellMask valid{1, 1, 0, 1};
  auto loss = [&](const MatrixXd& l) {
    return dfl_loss(DepthDistribution::from_logits(1, 4, l), gt, bins, valid);
  };
  const MatrixXd g = dfl_grad_logits(DepthDistribution::from_logits(1, 4, logits), gt, bins, valid);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    MatrixXd hi = logits, lo = logits;
    hi.data()[i] += 1e-6;
    lo.data()[i] -= 1e-6;
    EXPECT_NEAR(g.data()[i], (loss(hi) - loss(lo)) / 2e-6, 1e-7);
  }
}

// Gradient descent on the logits of one cell converges to the bracket
// weights (w, 1 - w) on the two neighbouring bins.
TEST(Dfl, MinimizerIsBracketWeights) {
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 4);
  const DepthMap gt = row_map({27.0});
  const Bracket b = bracket(27.0, bins);
  MatrixXd logits = MatrixXd::Zero(4, 1);
  for (int step = 0; step < 20000; ++step) {
    logits -= 2.0 * dfl_grad_logits(DepthDistribution::from_logits(1, 1, logits), gt, bins, all_valid(1));
  }
  const DepthDistribution d = DepthDistribution::from_logits(1, 1, logits);
  EXPECT_NEAR(d.prob(b.lower, 0), b.weight, 1e-3);
  EXPECT_NEAR(d.prob(b.upper, 0), 1 - b.weight, 1e-3);
}

TEST(DepthLoss, WeightsCombineTerms) {
  Rng rng(5);
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 5);
  const DepthDistribution dist = random_distribution(3, 5, rng);
  const DepthMap pred = row_map({5.0, 30.0, 50.0});
  const DepthMap gt = row_map({7.0, 29.5, 61.0});
  const double sm = smooth_l1(pred, gt, 1.0, all_valid(3));
  const double dfl = dfl_loss(dist, gt, bins, all_valid(3));
  EXPECT_NEAR(depth_loss(pred, dist, gt, bins, DepthLossWeights{}, all_valid(3)), 0.25 * sm + 0.25 * dfl, 1e-12);
  EXPECT_NEAR(depth_loss(pred, dist, gt, bins, DepthLossWeights{1.0, 0.0}, all_valid(3)), sm, 1e-12);
  EXPECT_THROW(DepthLossWeights({-0.1, 1.0}).validate(), Error);
}

TEST(DepthLoss, ClampToBinsOnlyTouchesValidCells) {
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 5);
  DepthMap gt = row_map({0.2, 30.0, 80.0, 90.0});
  gt.valid[3] = 0;
  const DepthMap c = clamp_to_bins(gt, bins);
  EXPECT_EQ(c.depth, (std::vector<double>{1.0, 30.0, 61.0, 90.0}));
}

TEST(DepthLoss, BackwardMatchesFiniteDifference) {
  Rng rng(6);
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 5);
  MatrixXd logits(5, 3);
  for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.normal();
  VectorXd reg(3);
  reg << 12.0, 33.0, 48.0;
  const FusionWeight alpha{0.4};
  const DepthMap gt = row_map({14.0, 20.0, 55.0});
  const DepthLossWeights w{};
  const auto g = depth_loss_backward(1, 3, logits, reg, alpha, gt, bins, w, all_valid(3));
  auto loss = [&](const MatrixXd& l, const VectorXd& r, double raw) {
    return depth_loss_backward(1, 3, l, r, FusionWeight{raw}, gt, bins, w, all_valid(3)).loss;
  };
  const double h = 1e-6;
  EXPECT_NEAR(g.d_alpha_raw, (loss(logits, reg, 0.4 + h) - loss(logits, reg, 0.4 - h)) / (2 * h), 1e-7);
  for (int i = 0; i < 3; ++i) {
    VectorXd hi = reg, lo = reg;
    hi(i) += h;
    lo(i) -= h;
    EXPECT_NEAR(g.d_regressed(i), (loss(logits, hi, 0.4) - loss(logits, lo, 0.4)) / (2 * h), 1e-7);
  }
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    MatrixXd hi = logits, lo = logits;
    hi.data()[i] += h;
    lo.data()[i] -= h;
    EXPECT_NEAR(g.d_logits.data()[i], (loss(hi, reg, 0.4) - loss(lo, reg, 0.4)) / (2 * h), 1e-7);
  }
}

TEST(DepthHead, OutputsStayInBinRange) {
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 8);
  const DepthHead head = DepthHead::init(4, 16, bins, 3);
  Rng rng(7);
  MatrixXd f(4, 50);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = 5.0 * rng.normal();
  const auto out = head.forward(f);
  EXPECT_GE(out.fused.minCoeff(), 1.0);
  EXPECT_LE(out.fused.maxCoeff(), 61.0);
  EXPECT_LT((out.prob.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(DepthHead, TrainingReducesLoss) {
  const DepthBins bins = make_bins(BinMethod::kUD, 1, 61, 8);
  Rng rng(8);
  MatrixXd f(3, 40);
  VectorXd gt(40);
  for (int c = 0; c < 40; ++c) {
    const double d = rng.uniform(2, 60);
    f.col(c) << d / 61.0, 1.0, rng.normal() * 0.1;
    gt(c) = d;
  }
  const CellMask valid = all_valid(40);
  DepthHeadTrainConfig cfg;
  cfg.steps = 0;
  const double before = train_depth_head(f, gt, valid, bins, cfg).loss_and_grad(f, gt, valid, cfg.weights, nullptr);
  cfg.steps = 300;
  const DepthHead trained = train_depth_head(f, gt, valid, bins, cfg);
  const double after = trained.loss_and_grad(f, gt, valid, cfg.weights, nullptr);
  EXPECT_LT(after, 0.5 * before);
  EXPECT_TRUE(trained.trunk.all_finite());
}

}  // namespace
}  // namespace pe3d
