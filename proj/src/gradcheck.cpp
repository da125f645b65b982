// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/depth_head.hpp>
#include <pe3d/detector.hpp>
#include <pe3d/encoders.hpp>
#include <pe3d/gradcheck.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

namespace pe3d {

namespace {

constexpr double kStep = 1e-6;

double rel_error(const VectorXd& analytic, const VectorXd& numeric) {
  const double scale = std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-8);
  return (analytic - numeric).lpNorm<Eigen::Infinity>() / scale;
}

/// Central differences of f over the n doubles at x.
VectorXd numeric_grad(double* x, Eigen::Index n, const std::function<double()>& f) {
  VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double keep = x[i];
    x[i] = keep + kStep;
    const double up = f();
    x[i] = keep - kStep;
    const double down = f();
    x[i] = keep;
    g(i) = (up - down) / (2.0 * kStep);
  }
  return g;
}

VectorXd flat(const Mlp& m) {
  VectorXd v(m.fc1.weight.size() + m.fc1.bias.size() + m.fc2.weight.size() + m.fc2.bias.size());
  v << m.fc1.weight.reshaped(), m.fc1.bias, m.fc2.weight.reshaped(), m.fc2.bias;
  return v;
}

VectorXd random_vector(int n, Rng& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

DepthMap random_depths(int h, int w, double lo, double hi, Rng& rng) {
  DepthMap m(h, w, 0.0, true);
  for (auto& d : m.depth) d = rng.uniform(lo, hi);
  return m;
}

double check_encode_point(Rng& rng) {
  const SineSpec spec{4};
  Mlp mlp = Mlp::init(3 * spec.half_dim, 16, 8, rng.next());
  Vec3 p(rng.uniform(), rng.uniform(), rng.uniform());
  const VectorXd up = random_vector(8, rng);
  auto f = [&] { return up.dot(encode_point(p, mlp, spec)); };
  const PointEncodeGrad g = encode_point_backward(p, mlp, spec, up);
  VectorXd analytic(3 + flat(g.grad_mlp).size());
  analytic << g.grad_p, flat(g.grad_mlp);
  VectorXd numeric(analytic.size());
  numeric.head<3>() = numeric_grad(p.data(), 3, f);
  Eigen::Index off = 3;  // same block order as flat()
  for (Linear* l : {&mlp.fc1, &mlp.fc2}) {
    numeric.segment(off, l->weight.size()) = numeric_grad(l->weight.data(), l->weight.size(), f);
    off += l->weight.size();
    numeric.segment(off, l->bias.size()) = numeric_grad(l->bias.data(), l->bias.size(), f);
    off += l->bias.size();
  }
  return rel_error(analytic, numeric);
}

struct DepthInstance {
  int h = 2, w = 3;
  DepthBins bins;
  MatrixXd logits;
  VectorXd regressed;
  FusionWeight alpha;
  DepthMap gt;
  CellMask valid;
};

DepthInstance random_depth_instance(Rng& rng) {
  DepthInstance d;
  const int n = 2 + static_cast<int>(rng.index(7));
  const BinMethod m = static_cast<BinMethod>(rng.index(3));
  d.bins = make_bins(m, 1.0, 61.0, n);
  d.logits = MatrixXd(n, d.h * d.w);
  for (Eigen::Index i = 0; i < d.logits.size(); ++i) d.logits(i) = rng.normal();
  d.regressed = VectorXd(d.h * d.w);
  for (Eigen::Index i = 0; i < d.regressed.size(); ++i) d.regressed(i) = rng.uniform(1.0, 61.0);
  d.alpha.raw = rng.normal();
  d.gt = random_depths(d.h, d.w, 1.0, 61.0, rng);
  d.valid.assign(d.h * d.w, 1);
  d.valid[rng.index(d.valid.size())] = 0;
  return d;
}

DepthMap as_map(int h, int w, const VectorXd& v) {
  DepthMap m(h, w, 0.0, true);
  for (int i = 0; i < h * w; ++i) m.depth[i] = v(i);
  return m;
}

double check_fuse_depth(Rng& rng) {
  DepthInstance d = random_depth_instance(rng);
  const DepthLossWeights weights;
  auto f = [&] {
    const DepthDistribution dist = DepthDistribution::from_logits(d.h, d.w, d.logits);
    const DepthMap fused = fuse_depth(as_map(d.h, d.w, d.regressed), expected_depth(dist, d.bins), d.alpha);
    return depth_loss(fused, dist, d.gt, d.bins, weights, d.valid);
  };
  const DepthLossGrad g =
      depth_loss_backward(d.h, d.w, d.logits, d.regressed, d.alpha, d.gt, d.bins, weights, d.valid);
  VectorXd analytic(g.d_logits.size() + g.d_regressed.size() + 1);
  analytic << g.d_logits.reshaped(), g.d_regressed, g.d_alpha_raw;
  VectorXd numeric(analytic.size());
  numeric << numeric_grad(d.logits.data(), d.logits.size(), f), numeric_grad(d.regressed.data(), d.regressed.size(), f),
      numeric_grad(&d.alpha.raw, 1, f);
  return rel_error(analytic, numeric);
}

double check_dfl(Rng& rng) {
  DepthInstance d = random_depth_instance(rng);
  auto f = [&] { return dfl_loss(DepthDistribution::from_logits(d.h, d.w, d.logits), d.gt, d.bins, d.valid); };
  const MatrixXd g = dfl_grad_logits(DepthDistribution::from_logits(d.h, d.w, d.logits), d.gt, d.bins, d.valid);
  return rel_error(g.reshaped(), numeric_grad(d.logits.data(), d.logits.size(), f));
}

double check_smooth_l1(Rng& rng) {
  DepthInstance d = random_depth_instance(rng);
  DepthMap pred = d.gt;
  // Offsets on both sides of the quadratic/linear transition.
  for (auto& v : pred.depth) v += rng.uniform(-3.0, 3.0);
  const double beta = rng.uniform(0.5, 2.0);
  auto f = [&] { return smooth_l1(pred, d.gt, beta, d.valid); };
  const VectorXd g = smooth_l1_grad(pred, d.gt, beta, d.valid);
  return rel_error(g, numeric_grad(pred.depth.data(), static_cast<Eigen::Index>(pred.depth.size()), f));
}

/// Micro instance: 2x2-cell views, one query, a handful of tokens per scene.
double check_toy_loss(Rng& rng, int index) {
  TrainConfig cfg;
  cfg.channels = 8;
  cfg.hidden = 16;
  cfg.queries = 1;
  cfg.seed = rng.next();
  cfg.ray_bins = make_bins(BinMethod::kUD, 1.0, 61.0, 2);
  cfg.topk = 2;
  static constexpr PeVariant kCycle[] = {PeVariant::kOraclePoint, PeVariant::kCameraRay, PeVariant::kTopk,
                                         PeVariant::kPe2d, PeVariant::kLidarRay};
  cfg.variant = kCycle[index % 5];
  cfg.sharing = (index / 5) % 2 ? EncoderSharing::kSeparated : EncoderSharing::kShared;
  ToyModel model = init_model(cfg);
  const SineSpec spec = cfg.sine();

  ToyDataset data;
  const int columns = 4;
  auto sine_block = [&] {
    Eigen::Matrix3Xd pts(3, columns);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts(i) = rng.uniform();
    return sine_features(pts, spec);
  };
  switch (cfg.variant) {
    case PeVariant::kPe2d:
      data.pe_blocks.push_back(pe2d(2, 2, spec).values);
      break;
    case PeVariant::kCameraRay: {
      MatrixXd b(3 * spec.half_dim * 2, columns);
      b << sine_block(), sine_block();
      data.pe_blocks.push_back(b);
      break;
    }
    case PeVariant::kTopk:
      data.pe_blocks = {sine_block(), sine_block()};
      break;
    default:
      data.pe_blocks.push_back(sine_block());
      break;
  }
  for (int s = 0; s < 2; ++s) {
    ToyDataset::Scene sc;
    const int tokens = 2 + static_cast<int>(rng.index(3));
    sc.features = MatrixXd(cfg.channels, tokens);
    for (Eigen::Index i = 0; i < sc.features.size(); ++i) sc.features(i) = rng.normal();
    for (int t = 0; t < tokens; ++t) {
      sc.pe_column.push_back(static_cast<int>(rng.index(columns)));
      sc.tokens.push_back(TokenRef{0, t});
    }
    sc.targets.push_back(Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    data.scenes.push_back(std::move(sc));
  }

  ToyModel grad;
  toy_loss(model, data, &grad);
  auto f = [&] { return toy_loss(model, data).loss; };
  auto params = parameter_blocks(model);
  auto grads = parameter_blocks(grad);
  Eigen::Index total = 0;
  for (const auto& b : params) total += b.size;
  VectorXd analytic(total), numeric(total);
  Eigen::Index off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    analytic.segment(off, grads[i].size) = Eigen::Map<const VectorXd>(grads[i].data, grads[i].size);
    numeric.segment(off, params[i].size) = numeric_grad(params[i].data, params[i].size, f);
    off += params[i].size;
  }
  return rel_error(analytic, numeric);
}

}  // namespace

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int instances) {
  struct Op {
    const char* name;
    double tol;
    std::function<double(Rng&, int)> run;
  };
  const std::vector<Op> ops = {
      {"encode_point", 1e-5, [](Rng& r, int) { return check_encode_point(r); }},
      {"fuse_depth", 1e-5, [](Rng& r, int) { return check_fuse_depth(r); }},
      {"dfl_loss", 1e-5, [](Rng& r, int) { return check_dfl(r); }},
      {"smooth_l1", 1e-5, [](Rng& r, int) { return check_smooth_l1(r); }},
      {"toy_loss", 1e-4, check_toy_loss},
  };
  std::vector<GradCheckResult> out;
  for (std::size_t k = 0; k < ops.size(); ++k) {
    Rng rng(derive_seed(seed, k + 1));
    GradCheckResult r{ops[k].name, instances, 0.0, ops[k].tol, true};
    for (int i = 0; i < instances; ++i) {
      const double e = ops[k].run(rng, i);
      if (!(e <= r.max_rel_error)) r.max_rel_error = std::isnan(e) ? INFINITY : e;
    }
    r.pass = r.max_rel_error < r.tolerance;
    out.push_back(r);
  }
  return out;
}

}  // namespace pe3d
