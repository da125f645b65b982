// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/depth_head.hpp>
#include <pe3d/error.hpp>

#include <algorithm>
#include <cmath>

namespace pe3d {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_same_shape(const DepthMap& a, const DepthMap& b, const char* what) {
  if (a.height != b.height || a.width != b.width) throw Error(ErrorCode::kShapeMismatch, what);
}

void require_mask(const CellMask& valid, std::size_t cells) {
  if (valid.size() != cells) throw Error(ErrorCode::kShapeMismatch, "mask size does not match the map");
}

std::size_t count_valid(const CellMask& valid) {
  return static_cast<std::size_t>(std::count_if(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; }));
}

MatrixXd column_softmax(const MatrixXd& logits) {
  MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    VectorXd e = (logits.col(j).array() - m).exp();
    p.col(j) = e / e.sum();
  }
  return p;
}

}  // namespace

void DepthDistribution::validate() const {
  if (prob.cols() != static_cast<Eigen::Index>(height) * width) {
    throw Error(ErrorCode::kShapeMismatch, "distribution has the wrong number of cells");
  }
  if ((prob.array() < 0.0).any()) throw Error(ErrorCode::kInvalidArgument, "negative probability");
  for (Eigen::Index j = 0; j < prob.cols(); ++j) {
    if (std::abs(prob.col(j).sum() - 1.0) > 1e-9) {
      throw Error(ErrorCode::kInvalidArgument, "cell probabilities must sum to 1");
    }
  }
}

DepthDistribution DepthDistribution::from_logits(int height, int width, const MatrixXd& logits) {
  if (logits.cols() != static_cast<Eigen::Index>(height) * width) {
    throw Error(ErrorCode::kShapeMismatch, "logits have the wrong number of cells");
  }
  return DepthDistribution{height, width, column_softmax(logits)};
}

double FusionWeight::value() const { return sigmoid(raw); }

double FusionWeight::derivative() const {
  const double s = sigmoid(raw);
  return s * (1.0 - s);
}

void DepthLossWeights::validate() const {
  if (!(lambda_sm >= 0.0) || !(lambda_dfl >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "loss weights must be >= 0");
}

DepthMap expected_depth(const DepthDistribution& dist, const DepthBins& bins) {
  if (dist.bins() != bins.count()) throw Error(ErrorCode::kShapeMismatch, "distribution and bins disagree on N_D");
  if (dist.prob.cols() != dist.cells()) throw Error(ErrorCode::kShapeMismatch, "distribution has the wrong cell count");
  const Eigen::Map<const VectorXd> centers(bins.centers.data(), bins.count());
  DepthMap out(dist.height, dist.width, 0.0, true);
  for (int j = 0; j < dist.cells(); ++j) out.depth[j] = dist.prob.col(j).dot(centers);
  return out;
}

DepthMap fuse_depth(const DepthMap& regressed, const DepthMap& probabilistic, const FusionWeight& alpha) {
  require_same_shape(regressed, probabilistic, "fuse_depth: map shapes differ");
  const double a = alpha.value();
  DepthMap out(regressed.height, regressed.width);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.depth[i] = a * regressed.depth[i] + (1.0 - a) * probabilistic.depth[i];
    out.valid[i] = regressed.valid[i] && probabilistic.valid[i];
  }
  return out;
}

double smooth_l1(const DepthMap& pred, const DepthMap& gt, double beta, const CellMask& valid) {
  require_same_shape(pred, gt, "smooth_l1: map shapes differ");
  require_mask(valid, pred.size());
  if (!(beta > 0.0)) throw Error(ErrorCode::kInvalidArgument, "beta must be > 0");
  const std::size_t n = count_valid(valid);
  if (n == 0) throw Error(ErrorCode::kNoValidPixels, "smooth_l1 needs at least one valid cell");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double x = std::abs(pred.depth[i] - gt.depth[i]);
    sum += x < beta ? 0.5 * x * x / beta : x - 0.5 * beta;
  }
  return sum / static_cast<double>(n);
}

VectorXd smooth_l1_grad(const DepthMap& pred, const DepthMap& gt, double beta, const CellMask& valid) {
  require_same_shape(pred, gt, "smooth_l1: map shapes differ");
  require_mask(valid, pred.size());
  const std::size_t n = count_valid(valid);
  if (n == 0) throw Error(ErrorCode::kNoValidPixels, "smooth_l1 needs at least one valid cell");
  VectorXd g = VectorXd::Zero(static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double x = pred.depth[i] - gt.depth[i];
    g(i) = (std::abs(x) < beta ? x / beta : (x > 0 ? 1.0 : -1.0)) / static_cast<double>(n);
  }
  return g;
}

DepthMap clamp_to_bins(const DepthMap& gt, const DepthBins& bins) {
  DepthMap out = gt;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.valid[i]) out.depth[i] = std::clamp(out.depth[i], bins.centers.front(), bins.centers.back());
  }
  return out;
}

namespace {

void check_dfl_inputs(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins, const CellMask& valid) {
  if (dist.bins() != bins.count()) throw Error(ErrorCode::kShapeMismatch, "distribution and bins disagree on N_D");
  if (dist.height != gt.height || dist.width != gt.width || dist.prob.cols() != dist.cells()) {
    throw Error(ErrorCode::kShapeMismatch, "dfl_loss: shapes differ");
  }
  require_mask(valid, gt.size());
  if (count_valid(valid) == 0) throw Error(ErrorCode::kNoValidPixels, "dfl_loss needs at least one valid cell");
}

}  // namespace

double dfl_loss(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins, const CellMask& valid) {
  check_dfl_inputs(dist, gt, bins, valid);
  double sum = 0.0;
  std::size_t n = 0;
  for (int j = 0; j < dist.cells(); ++j) {
    if (!valid[j]) continue;
    const Bracket b = bracket(gt.depth[j], bins);
    const double pl = std::max(dist.prob(b.lower, j), kProbabilityFloor);
    const double pu = std::max(dist.prob(b.upper, j), kProbabilityFloor);
    // Zero-weight terms are skipped so an exactly-on-center target costs 0.
    if (b.weight > 0.0) sum -= b.weight * std::log(pl);
    if (b.weight < 1.0) sum -= (1.0 - b.weight) * std::log(pu);
    ++n;
  }
  return sum / static_cast<double>(n);
}

MatrixXd dfl_grad_prob(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins, const CellMask& valid) {
  check_dfl_inputs(dist, gt, bins, valid);
  const double inv_n = 1.0 / static_cast<double>(count_valid(valid));
  MatrixXd g = MatrixXd::Zero(dist.prob.rows(), dist.prob.cols());
  for (int j = 0; j < dist.cells(); ++j) {
    if (!valid[j]) continue;
    const Bracket b = bracket(gt.depth[j], bins);
    const double pl = dist.prob(b.lower, j);
    const double pu = dist.prob(b.upper, j);
    if (b.weight > 0.0 && pl > kProbabilityFloor) g(b.lower, j) -= b.weight / pl * inv_n;
    if (b.weight < 1.0 && pu > kProbabilityFloor) g(b.upper, j) -= (1.0 - b.weight) / pu * inv_n;
  }
  return g;
}

MatrixXd softmax_backward(const MatrixXd& prob, const MatrixXd& grad_prob) {
  MatrixXd d(prob.rows(), prob.cols());
  for (Eigen::Index j = 0; j < prob.cols(); ++j) {
    const double s = prob.col(j).dot(grad_prob.col(j));
    d.col(j) = prob.col(j).cwiseProduct(grad_prob.col(j).array().matrix() - VectorXd::Constant(prob.rows(), s));
  }
  return d;
}

MatrixXd dfl_grad_logits(const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins,
                         const CellMask& valid) {
  return softmax_backward(dist.prob, dfl_grad_prob(dist, gt, bins, valid));
}

double depth_loss(const DepthMap& pred, const DepthDistribution& dist, const DepthMap& gt, const DepthBins& bins,
                  const DepthLossWeights& weights, const CellMask& valid, double beta) {
  weights.validate();
  double loss = 0.0;
  if (weights.lambda_sm != 0.0) loss += weights.lambda_sm * smooth_l1(pred, gt, beta, valid);
  if (weights.lambda_dfl != 0.0) loss += weights.lambda_dfl * dfl_loss(dist, gt, bins, valid);
  return loss;
}

DepthLossGrad depth_loss_backward(int height, int width, const MatrixXd& logits, const VectorXd& regressed,
                                  const FusionWeight& alpha, const DepthMap& gt, const DepthBins& bins,
                                  const DepthLossWeights& weights, const CellMask& valid, double beta) {
  weights.validate();
  const DepthDistribution dist = DepthDistribution::from_logits(height, width, logits);
  if (regressed.size() != dist.cells()) throw Error(ErrorCode::kShapeMismatch, "regressed map has the wrong size");
  const DepthMap dp = expected_depth(dist, bins);
  DepthMap dr(height, width, 0.0, true);
  for (int i = 0; i < dist.cells(); ++i) dr.depth[i] = regressed(i);
  const DepthMap pred = fuse_depth(dr, dp, alpha);

  DepthLossGrad g;
  g.loss = depth_loss(pred, dist, gt, bins, weights, valid, beta);
  g.d_logits = MatrixXd::Zero(logits.rows(), logits.cols());
  g.d_regressed = VectorXd::Zero(dist.cells());
  if (weights.lambda_sm != 0.0) {
    const VectorXd d_pred = weights.lambda_sm * smooth_l1_grad(pred, gt, beta, valid);
    const double a = alpha.value();
    g.d_regressed = a * d_pred;
    const Eigen::Map<const VectorXd> centers(bins.centers.data(), bins.count());
    // d D^P / d P_i = d_i for each cell.
    MatrixXd d_prob = centers * ((1.0 - a) * d_pred).transpose();
    g.d_logits += softmax_backward(dist.prob, d_prob);
    double d_alpha = 0.0;
    for (int i = 0; i < dist.cells(); ++i) d_alpha += d_pred(i) * (dr.depth[i] - dp.depth[i]);
    g.d_alpha_raw = d_alpha * alpha.derivative();
  }
  if (weights.lambda_dfl != 0.0) g.d_logits += weights.lambda_dfl * dfl_grad_logits(dist, gt, bins, valid);
  return g;
}

DepthHead DepthHead::init(int in, int hidden, DepthBins bins, std::uint64_t seed) {
  DepthHead h;
  h.trunk = Mlp::init(in, hidden, bins.count() + 1, seed);
  h.alpha = FusionWeight{0.0};
  h.bins = std::move(bins);
  return h;
}

DepthHead::Output DepthHead::forward(const MatrixXd& features) const {
  const int nd = bins.count();
  const MatrixXd out = trunk.forward(features);
  Output o;
  o.logits = out.topRows(nd);
  o.prob = column_softmax(o.logits);
  const double lo = bins.centers.front();
  const double span = bins.centers.back() - lo;
  o.regressed = out.row(nd).transpose().unaryExpr([&](double r) { return lo + span * sigmoid(r); });
  const Eigen::Map<const VectorXd> centers(bins.centers.data(), nd);
  o.expected = o.prob.transpose() * centers;
  const double a = alpha.value();
  o.fused = a * o.regressed + (1.0 - a) * o.expected;
  return o;
}

double DepthHead::loss_and_grad(const MatrixXd& features, const VectorXd& gt, const CellMask& valid,
                                const DepthLossWeights& weights, DepthHead* grad) const {
  const int nd = bins.count();
  const int cells = static_cast<int>(features.cols());
  Mlp::Cache cache;
  const MatrixXd out = trunk.forward(features, &cache);
  const MatrixXd logits = out.topRows(nd);
  const double lo = bins.centers.front();
  const double span = bins.centers.back() - lo;
  const VectorXd raw = out.row(nd).transpose();
  const VectorXd regressed = raw.unaryExpr([&](double r) { return lo + span * sigmoid(r); });
  DepthMap gt_map(1, cells, 0.0, true);
  for (int i = 0; i < cells; ++i) gt_map.depth[i] = gt(i);
  gt_map.valid = valid;
  gt_map = clamp_to_bins(gt_map, bins);
  const DepthLossGrad g = depth_loss_backward(1, cells, logits, regressed, alpha, gt_map, bins, weights, valid);
  if (grad) {
    MatrixXd d_out(nd + 1, cells);
    d_out.topRows(nd) = g.d_logits;
    for (int i = 0; i < cells; ++i) {
      const double s = sigmoid(raw(i));
      d_out(nd, i) = g.d_regressed(i) * span * s * (1.0 - s);
    }
    trunk.backward(features, cache, d_out, grad->trunk, false);
    grad->alpha.raw += g.d_alpha_raw;
  }
  return g.loss;
}

DepthHead train_depth_head(const MatrixXd& features, const VectorXd& gt, const CellMask& valid,
                           const DepthBins& bins, const DepthHeadTrainConfig& cfg) {
  DepthHead head = DepthHead::init(static_cast<int>(features.rows()), cfg.hidden, bins, cfg.seed);
  for (int step = 0; step < cfg.steps; ++step) {
    DepthHead grad;
    grad.trunk = head.trunk.zeros_like();
    grad.alpha.raw = 0.0;
    head.loss_and_grad(features, gt, valid, cfg.weights, &grad);
    head.trunk.axpy(-cfg.lr, grad.trunk);
    head.alpha.raw -= cfg.lr * grad.alpha.raw;
  }
  return head;
}

}  // namespace pe3d
