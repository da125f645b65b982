// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/detector.hpp>
#include <pe3d/error.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace pe3d {

namespace {

// Seed salts for the independent random streams of one training run.
enum SeedSalt : std::uint64_t {
  kSaltScenes = 1,
  kSaltEmbedding = 2,
  kSaltPeMlp = 3,
  kSaltAnchorMlp = 4,
  kSaltDecoder = 5,
  kSaltDepthHead = 6,
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool uses_point_mlp(PeVariant v) {
  return v == PeVariant::kLidarRay || v == PeVariant::kOraclePoint || v == PeVariant::kDepthPoint ||
         v == PeVariant::kTopk;
}

bool is_rig_static(PeVariant v) {
  return v == PeVariant::kPe2d || v == PeVariant::kCameraRay || v == PeVariant::kLidarRay;
}

/// Row-wise softmax of K x T logits.
MatrixXd row_softmax(const MatrixXd& logits) {
  MatrixXd a(logits.rows(), logits.cols());
  for (Eigen::Index k = 0; k < logits.rows(); ++k) {
    const double m = logits.row(k).maxCoeff();
    a.row(k) = (logits.row(k).array() - m).exp();
    a.row(k) /= a.row(k).sum();
  }
  return a;
}

struct AttentionCache {
  MatrixXd q;     // C x K queries
  MatrixXd qp;    // W_q q
  MatrixXd r;     // W_k^T qp
  MatrixXd attn;  // K x T
  MatrixXd fbar;  // F3 attn^T
  MatrixXd o;     // W_v fbar
  Eigen::Matrix3Xd centers;
};

void attention_forward(const DecoderState& s, const MatrixXd& q, const MatrixXd& f3, AttentionCache& c) {
  if (f3.cols() == 0) throw Error(ErrorCode::kAllTokensMasked, "no unmasked token to attend to");
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(s.channels()));
  c.q = q;
  c.qp = s.wq * q;
  c.r = s.wk.transpose() * c.qp;
  c.attn = row_softmax((c.r.transpose() * f3) * inv_sqrt_c);
  c.fbar = f3 * c.attn.transpose();
  c.o = s.wv * c.fbar;
  MatrixXd z = s.head.forward(c.o);
  c.centers = z.unaryExpr([](double v) { return sigmoid(v); });
}

/// Backward from dL/dcenters; accumulates decoder gradients, returns dL/dq and
/// writes dL/dF3 into d_f3.
MatrixXd attention_backward(const DecoderState& s, const MatrixXd& f3, const AttentionCache& c,
                            const Eigen::Matrix3Xd& d_centers, DecoderState& g, MatrixXd& d_f3) {
  const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(s.channels()));
  const MatrixXd dz = d_centers.array() * c.centers.array() * (1.0 - c.centers.array());
  const MatrixXd d_o = s.head.backward(c.o, dz, g.head);
  g.wv.noalias() += d_o * c.fbar.transpose();
  const MatrixXd d_fbar = s.wv.transpose() * d_o;
  const MatrixXd d_attn = d_fbar.transpose() * f3;
  d_f3.noalias() = d_fbar * c.attn;
  const Eigen::VectorXd row_dot = (c.attn.array() * d_attn.array()).rowwise().sum();
  MatrixXd d_logits = c.attn.array() * (d_attn.colwise() - row_dot).array();
  d_logits *= inv_sqrt_c;
  const MatrixXd d_r = f3 * d_logits.transpose();
  d_f3.noalias() += c.r * d_logits;
  g.wk.noalias() += c.qp * d_r.transpose();
  const MatrixXd d_qp = s.wk * d_r;
  g.wq.noalias() += d_qp * c.q.transpose();
  return s.wq.transpose() * d_qp;
}

Eigen::Matrix3Xd anchor_matrix(const AnchorPoints& a) {
  Eigen::Matrix3Xd m(3, a.points.size());
  for (std::size_t k = 0; k < a.points.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = a.points[k];
  return m;
}

}  // namespace

FeatureEmbedding FeatureEmbedding::init(int channels, int classes, std::uint64_t seed) {
  Rng rng(seed);
  FeatureEmbedding e;
  e.class_embed.resize(channels, classes);
  for (int k = 0; k < classes; ++k) {
    for (int c = 0; c < channels; ++c) e.class_embed(c, k) = rng.normal();
  }
  e.depth_dir.resize(channels);
  for (int c = 0; c < channels; ++c) e.depth_dir(c) = rng.normal();
  return e;
}

VectorXd FeatureEmbedding::feature(int class_id, double depth) const {
  const int cls = std::clamp(class_id, 0, static_cast<int>(class_embed.cols()) - 1);
  return class_embed.col(cls) + std::min(depth / depth_scale, 1.0) * depth_dir;
}

FeatureGrid make_feature_grid(const Rendering& rendering, const SimScene& scene, const FeatureEmbedding& embed) {
  const DepthMap& d = rendering.depth;
  FeatureGrid g{d.height, d.width, MatrixXd::Zero(embed.channels(), static_cast<Eigen::Index>(d.size())),
                CellMask(d.size(), 1)};
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.valid[i]) continue;
    g.values.col(static_cast<Eigen::Index>(i)) = embed.feature(scene.class_of(rendering.hit[i]), d.depth[i]);
    g.mask[i] = 0;
  }
  return g;
}

PointAwareFeatures fuse_features(const std::vector<FeatureGrid>& features, const std::vector<PEGrid>& pe) {
  if (features.size() != pe.size()) throw Error(ErrorCode::kShapeMismatch, "feature and PE view counts differ");
  Eigen::Index total = 0;
  for (std::size_t v = 0; v < features.size(); ++v) {
    if (features[v].height != pe[v].height || features[v].width != pe[v].width ||
        features[v].values.rows() != pe[v].values.rows() || features[v].values.cols() != pe[v].values.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "view " + std::to_string(v) + ": feature and PE shapes differ");
    }
    total += features[v].values.cols();
  }
  PointAwareFeatures out;
  out.values.resize(features.empty() ? 0 : features[0].values.rows(), total);
  out.mask.reserve(total);
  out.tokens.reserve(total);
  Eigen::Index offset = 0;
  for (std::size_t v = 0; v < features.size(); ++v) {
    const Eigen::Index n = features[v].values.cols();
    out.values.middleCols(offset, n) = features[v].values + pe[v].values;
    for (Eigen::Index i = 0; i < n; ++i) {
      out.mask.push_back((features[v].mask[i] || pe[v].mask[i]) ? 1 : 0);
      out.tokens.push_back(TokenRef{static_cast<int>(v), static_cast<int>(i)});
    }
    offset += n;
  }
  return out;
}

DecoderState DecoderState::init(int channels, int queries, std::uint64_t seed) {
  if (channels <= 0 || queries < 1) throw Error(ErrorCode::kInvalidArgument, "decoder needs C > 0 and K >= 1");
  Rng rng(seed);
  DecoderState s;
  s.content.resize(channels, queries);
  for (int k = 0; k < queries; ++k) {
    for (int c = 0; c < channels; ++c) s.content(c, k) = rng.normal();
  }
  s.anchors = AnchorPoints::random(queries, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  auto square = [&]() {
    MatrixXd m(channels, channels);
    for (int r = 0; r < channels; ++r) {
      for (int c = 0; c < channels; ++c) m(r, c) = rng.uniform(-bound, bound);
    }
    return m;
  };
  s.wq = square();
  s.wk = square();
  s.wv = square();
  s.head = Linear::init(channels, 3, rng);
  return s;
}

DecodeResult decode(const DecoderState& state, const MatrixXd& anchor_pe, const PointAwareFeatures& feats) {
  if (anchor_pe.rows() != state.channels() || anchor_pe.cols() != state.queries()) {
    throw Error(ErrorCode::kShapeMismatch, "anchor PE must be C x K");
  }
  if (feats.values.rows() != state.channels()) throw Error(ErrorCode::kShapeMismatch, "token width != C");
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < feats.values.cols(); ++j) {
    if (feats.mask.empty() || !feats.mask[j]) live.push_back(j);
  }
  if (live.empty()) throw Error(ErrorCode::kAllTokensMasked, "every token is masked");
  MatrixXd f3(feats.values.rows(), static_cast<Eigen::Index>(live.size()));
  for (std::size_t i = 0; i < live.size(); ++i) f3.col(static_cast<Eigen::Index>(i)) = feats.values.col(live[i]);
  AttentionCache c;
  attention_forward(state, state.content + anchor_pe, f3, c);
  DecodeResult out{c.centers, MatrixXd::Zero(state.queries(), feats.values.cols())};
  for (std::size_t i = 0; i < live.size(); ++i) out.attention.col(live[i]) = c.attn.col(static_cast<Eigen::Index>(i));
  return out;
}

DecodeResult decode(const DecoderState& state, const Mlp& anchor_mlp, const SineSpec& spec,
                    const PointAwareFeatures& feats) {
  return decode(state, encode_anchors(state.anchors, anchor_mlp, spec).transpose(), feats);
}

std::vector<int> greedy_assign(const Eigen::Matrix3Xd& predictions, const std::vector<Vec3>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) > predictions.cols()) {
    throw Error(ErrorCode::kInvalidArgument, "more targets than queries");
  }
  std::vector<int> assigned(targets.size(), -1);
  std::vector<bool> used(predictions.cols(), false);
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < predictions.cols(); ++k) {
      if (used[k]) continue;
      const double d = (predictions.col(k) - targets[t]).squaredNorm();
      if (d < best) {
        best = d;
        assigned[t] = static_cast<int>(k);
      }
    }
    used[assigned[t]] = true;
  }
  return assigned;
}

std::vector<ParamBlock> parameter_blocks(ToyModel& m) {
  std::vector<ParamBlock> b;
  auto add = [&b](const std::string& group, auto& mat) { b.push_back({group, mat.data(), mat.size()}); };
  if (m.pe_mlp) {
    add("pe_mlp", m.pe_mlp->fc1.weight);
    add("pe_mlp", m.pe_mlp->fc1.bias);
    add("pe_mlp", m.pe_mlp->fc2.weight);
    add("pe_mlp", m.pe_mlp->fc2.bias);
  }
  if (m.reduce) {
    add("pe_reduce", m.reduce->weight);
    add("pe_reduce", m.reduce->bias);
  }
  if (!m.shared_anchor) {
    add("anchor_mlp", m.anchor_mlp.fc1.weight);
    add("anchor_mlp", m.anchor_mlp.fc1.bias);
    add("anchor_mlp", m.anchor_mlp.fc2.weight);
    add("anchor_mlp", m.anchor_mlp.fc2.bias);
  }
  if (!m.decoder.anchors.points.empty()) {
    b.push_back({"anchors", m.decoder.anchors.points[0].data(),
                 static_cast<Eigen::Index>(3 * m.decoder.anchors.points.size())});
  }
  add("content", m.decoder.content);
  add("attention", m.decoder.wq);
  add("attention", m.decoder.wk);
  add("attention", m.decoder.wv);
  add("head", m.decoder.head.weight);
  add("head", m.decoder.head.bias);
  return b;
}

void ToyModel::axpy(double alpha, const ToyModel& grad) {
  auto mine = parameter_blocks(*this);
  auto theirs = parameter_blocks(const_cast<ToyModel&>(grad));
  if (mine.size() != theirs.size()) throw Error(ErrorCode::kShapeMismatch, "model layouts differ");
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].size != theirs[i].size) throw Error(ErrorCode::kShapeMismatch, "model layouts differ");
    Eigen::Map<Eigen::VectorXd>(mine[i].data, mine[i].size) +=
        alpha * Eigen::Map<const Eigen::VectorXd>(theirs[i].data, theirs[i].size);
  }
}

ToyModel ToyModel::zeros_like() const {
  ToyModel z;
  z.variant = variant;
  z.spec = spec;
  z.shared_anchor = shared_anchor;
  if (pe_mlp) {
    z.pe_mlp = Mlp{Linear{MatrixXd::Zero(pe_mlp->fc1.weight.rows(), pe_mlp->fc1.weight.cols()),
                          VectorXd::Zero(pe_mlp->fc1.bias.size())},
                   pe_mlp->fc2.zeros_like(), pe_mlp->seed};
  }
  if (reduce) z.reduce = reduce->zeros_like();
  if (!shared_anchor) z.anchor_mlp = anchor_mlp.zeros_like();
  z.decoder = decoder;
  for (auto& b : parameter_blocks(z)) Eigen::Map<Eigen::VectorXd>(b.data, b.size).setZero();
  return z;
}

namespace {

/// When `fc1_pre` is given it replaces the PE MLP's first-layer output for
/// pe_blocks[0]; the first-layer gradient is then returned as dL/d(pre) in
/// `d_fc1_pre` instead of being accumulated into `grad`.
LossResult loss_impl(const ToyModel& model, const ToyDataset& data, ToyModel* grad, const MatrixXd* fc1_pre,
                     MatrixXd* d_fc1_pre) {
  const DecoderState& dec = model.decoder;
  const int channels = dec.channels();

  // PE for every source column.
  std::vector<Mlp::Cache> mlp_cache(data.pe_blocks.size());
  std::vector<MatrixXd> point_out;
  MatrixXd pe_all;
  switch (model.variant) {
    case PeVariant::kPe2d:
      pe_all = data.pe_blocks.at(0);
      break;
    case PeVariant::kTopk: {
      const int k = static_cast<int>(data.pe_blocks.size());
      MatrixXd cat(k * channels, data.pe_blocks[0].cols());
      for (int j = 0; j < k; ++j) cat.middleRows(j * channels, channels) = model.pe_mlp->forward(data.pe_blocks[j], &mlp_cache[j]);
      point_out.push_back(std::move(cat));
      pe_all = model.reduce->forward(point_out[0]);
      break;
    }
    default:
      if (fc1_pre) {
        mlp_cache[0].pre = *fc1_pre;
        mlp_cache[0].hidden = fc1_pre->cwiseMax(0.0);
        pe_all = model.pe_mlp->fc2.forward(mlp_cache[0].hidden);
      } else {
        pe_all = model.pe_mlp->forward(data.pe_blocks.at(0), &mlp_cache[0]);
      }
      break;
  }

  // Query anchors.
  const Eigen::Matrix3Xd anchors = anchor_matrix(dec.anchors);
  const MatrixXd anchor_in = sine_features(anchors, model.spec);
  Mlp::Cache anchor_cache;
  const MatrixXd anchor_pe = model.anchor_encoder().forward(anchor_in, &anchor_cache);
  const MatrixXd queries = dec.content + anchor_pe;

  std::size_t total_targets = 0;
  for (const auto& s : data.scenes) total_targets += s.targets.size();
  if (total_targets == 0) throw Error(ErrorCode::kInvalidArgument, "dataset has no targets");
  const double inv_n = 1.0 / static_cast<double>(total_targets);
  const Vec3 extent = data.region.extent();

  MatrixXd d_pe_all;
  MatrixXd d_queries;
  if (grad) {
    *grad = model.zeros_like();
    d_pe_all = MatrixXd::Zero(pe_all.rows(), pe_all.cols());
    d_queries = MatrixXd::Zero(queries.rows(), queries.cols());
  }

  LossResult result;
  AttentionCache cache;
  MatrixXd f3;
  MatrixXd d_f3;
  for (const auto& scene : data.scenes) {
    const Eigen::Index t = scene.features.cols();
    f3 = scene.features;
    for (Eigen::Index j = 0; j < t; ++j) f3.col(j) += pe_all.col(scene.pe_column[j]);
    attention_forward(dec, queries, f3, cache);
    const auto assign = greedy_assign(cache.centers, scene.targets);
    Eigen::Matrix3Xd d_centers = Eigen::Matrix3Xd::Zero(3, cache.centers.cols());
    for (std::size_t i = 0; i < scene.targets.size(); ++i) {
      const Vec3 diff = cache.centers.col(assign[i]) - scene.targets[i];
      result.loss += diff.squaredNorm() * inv_n;
      result.error_m += diff.cwiseProduct(extent).norm() * inv_n;
      d_centers.col(assign[i]) += 2.0 * inv_n * diff;
    }
    if (!grad) continue;
    d_queries += attention_backward(dec, f3, cache, d_centers, grad->decoder, d_f3);
    for (Eigen::Index j = 0; j < t; ++j) d_pe_all.col(scene.pe_column[j]) += d_f3.col(j);
  }
  if (!grad) return result;

  grad->decoder.content = d_queries;
  // Anchor encoder backward; the anchors' MLP gradient lands in the PE MLP
  // when the encoder is shared.
  Mlp& anchor_grad = model.shared_anchor ? *grad->pe_mlp : grad->anchor_mlp;
  const MatrixXd d_anchor_in = model.anchor_encoder().backward(anchor_in, anchor_cache, d_queries, anchor_grad);
  const Eigen::Matrix3Xd d_anchors = sine_features_backward(anchors, d_anchor_in, model.spec);
  for (Eigen::Index k = 0; k < d_anchors.cols(); ++k) grad->decoder.anchors.points[k] = d_anchors.col(k);

  switch (model.variant) {
    case PeVariant::kPe2d:
      break;
    case PeVariant::kTopk: {
      const MatrixXd d_cat = model.reduce->backward(point_out[0], d_pe_all, *grad->reduce);
      for (std::size_t j = 0; j < data.pe_blocks.size(); ++j) {
        model.pe_mlp->backward(data.pe_blocks[j], mlp_cache[j],
                               d_cat.middleRows(static_cast<Eigen::Index>(j) * channels, channels), *grad->pe_mlp, false);
      }
      break;
    }
    default:
      if (fc1_pre) {
        const MatrixXd d_hidden = model.pe_mlp->fc2.backward(mlp_cache[0].hidden, d_pe_all, grad->pe_mlp->fc2);
        *d_fc1_pre = (mlp_cache[0].pre.array() > 0.0).select(d_hidden, 0.0);
      } else {
        model.pe_mlp->backward(data.pe_blocks[0], mlp_cache[0], d_pe_all, *grad->pe_mlp, false);
      }
      break;
  }
  return result;
}

/// Plain gradient descent on the PE MLP's first layer when its inputs X are
/// fixed and not shared with the anchors: W1 only ever moves by G X^T, so
/// the pre-activation W1 X + b1 evolves as pre -= lr (G X^T X + g_b 1^T) and
/// W1 is rebuilt once at the end. Cost per step scales with columns^2 rather
/// than with the (wide) input dimension.
bool use_gram_path(const ToyModel& m, const ToyDataset& data) {
  return is_rig_static(m.variant) && m.pe_mlp && !m.shared_anchor && data.pe_blocks.size() == 1 &&
         data.pe_blocks[0].rows() > data.pe_blocks[0].cols();
}

}  // namespace

LossResult toy_loss(const ToyModel& model, const ToyDataset& data, ToyModel* grad) {
  return loss_impl(model, data, grad, nullptr, nullptr);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr must be > 0");
  if (steps < 0) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 0");
  if (channels <= 0 || channels % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "channels must be a positive multiple of 4");
  if (hidden <= 0) throw Error(ErrorCode::kInvalidArgument, "hidden width must be positive");
  if (queries < 1 || queries > 8) throw Error(ErrorCode::kInvalidArgument, "queries must be in [1, 8]");
  if (queries < scene.objects) throw Error(ErrorCode::kInvalidArgument, "need at least as many queries as objects");
  if (scenes < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one scene");
  if (stride < 1) throw Error(ErrorCode::kInvalidArgument, "stride must be >= 1");
  if (variant == PeVariant::kTopk && (topk < 1 || topk > head_bins.count())) {
    throw Error(ErrorCode::kKTooLarge, "topk must be in [1, N_D]");
  }
  if (variant == PeVariant::kLidarRay && !(fixed_depth > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fixed depth must be > 0");
  }
  region.validate();
}

ToyModel init_model(const TrainConfig& cfg) {
  cfg.validate();
  ToyModel m;
  m.variant = cfg.variant;
  m.spec = cfg.sine();
  const int point_in = 3 * m.spec.half_dim;
  const std::uint64_t pe_seed = derive_seed(cfg.seed, kSaltPeMlp);
  switch (cfg.variant) {
    case PeVariant::kPe2d:
      break;
    case PeVariant::kCameraRay:
      m.pe_mlp = Mlp::init(point_in * cfg.ray_bins.count(), cfg.hidden, cfg.channels, pe_seed);
      break;
    case PeVariant::kTopk: {
      TopkEncoder enc = TopkEncoder::init(cfg.topk, point_in, cfg.hidden, cfg.channels, pe_seed);
      m.pe_mlp = enc.point;
      m.reduce = enc.reduce;
      break;
    }
    default:
      m.pe_mlp = Mlp::init(point_in, cfg.hidden, cfg.channels, pe_seed);
      break;
  }
  m.shared_anchor = cfg.sharing == EncoderSharing::kShared && uses_point_mlp(cfg.variant);
  if (!m.shared_anchor) {
    m.anchor_mlp = Mlp::init(point_in, cfg.hidden, cfg.channels, derive_seed(cfg.seed, kSaltAnchorMlp));
  }
  m.decoder = DecoderState::init(cfg.channels, cfg.queries, derive_seed(cfg.seed, kSaltDecoder));
  return m;
}

std::vector<SimScene> make_scenes(const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, kSaltScenes));
  std::vector<SimScene> scenes;
  for (int i = 0; i < cfg.scenes; ++i) scenes.push_back(random_object_scene(cfg.scene, rng));
  return scenes;
}

ToyDataset build_dataset(const std::vector<SimScene>& scenes, const std::vector<CameraParams>& cams,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (cams.empty()) throw Error(ErrorCode::kInvalidArgument, "rig has no camera");
  const SineSpec spec = cfg.sine();
  const FeatureEmbedding embed = FeatureEmbedding::init(cfg.channels, 2, derive_seed(cfg.seed, kSaltEmbedding));

  ToyDataset data;
  data.region = cfg.region;
  std::vector<GridSpec> grids;
  std::vector<int> view_offset;
  int total_cells = 0;
  for (const auto& cam : cams) {
    grids.push_back(GridSpec::for_camera(cam, cfg.stride));
    view_offset.push_back(total_cells);
    total_cells += grids.back().cells();
  }

  // Gt points per token, kept for the point-style variants.
  struct TokenGeom {
    int view;
    int cell;
    double depth;
  };
  std::vector<std::vector<TokenGeom>> geom(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    scenes[s].validate(cfg.region);
    if (scenes[s].objects.empty()) throw Error(ErrorCode::kInvalidArgument, "every scene needs an object");
    if (static_cast<int>(scenes[s].objects.size()) > cfg.queries) {
      throw Error(ErrorCode::kInvalidArgument, "scene has more objects than queries");
    }
    ToyDataset::Scene sc;
    std::vector<VectorXd> feats;
    for (std::size_t v = 0; v < cams.size(); ++v) {
      const Rendering r = render(scenes[s], cams[v], grids[v]);
      for (int cell = 0; cell < grids[v].cells(); ++cell) {
        if (!r.depth.valid[cell]) continue;
        const int row = cell / grids[v].width;
        const int col = cell % grids[v].width;
        const Vec3 p = back_project(grids[v].pixel_u(col), grids[v].pixel_v(row), r.depth.depth[cell], cams[v]);
        const Vec3 n = normalize_point(p, cfg.region);
        if ((n.array() < 0.0).any() || (n.array() > 1.0).any()) continue;
        feats.push_back(embed.feature(scenes[s].class_of(r.hit[cell]), r.depth.depth[cell]));
        sc.tokens.push_back(TokenRef{static_cast<int>(v), cell});
        geom[s].push_back(TokenGeom{static_cast<int>(v), cell, r.depth.depth[cell]});
      }
    }
    if (feats.empty()) throw Error(ErrorCode::kAllTokensMasked, "scene " + std::to_string(s) + " has no token");
    sc.features.resize(cfg.channels, static_cast<Eigen::Index>(feats.size()));
    for (std::size_t j = 0; j < feats.size(); ++j) sc.features.col(static_cast<Eigen::Index>(j)) = feats[j];
    for (const auto& o : scenes[s].objects) sc.targets.push_back(normalize_point(o.center, cfg.region));
    data.scenes.push_back(std::move(sc));
  }

  if (is_rig_static(cfg.variant)) {
    // Only cells that carry a token in some scene get a PE column.
    std::vector<MatrixXd> view_inputs;
    for (std::size_t v = 0; v < cams.size(); ++v) {
      if (cfg.variant == PeVariant::kPe2d) {
        view_inputs.push_back(pe2d(grids[v].height, grids[v].width, spec).values);
      } else {
        const DepthBins bins =
            cfg.variant == PeVariant::kCameraRay ? cfg.ray_bins : DepthBins::single(cfg.fixed_depth);
        view_inputs.push_back(ray_inputs(cams[v], grids[v], bins, spec, cfg.region));
      }
    }
    std::vector<int> column_of(total_cells, -1);
    std::vector<TokenRef> used;
    for (auto& sc : data.scenes) {
      for (const auto& tok : sc.tokens) {
        int& c = column_of[view_offset[tok.view] + tok.cell];
        if (c < 0) {
          c = static_cast<int>(used.size());
          used.push_back(tok);
        }
        sc.pe_column.push_back(c);
      }
    }
    MatrixXd block(view_inputs[0].rows(), static_cast<Eigen::Index>(used.size()));
    for (std::size_t c = 0; c < used.size(); ++c) {
      block.col(static_cast<Eigen::Index>(c)) = view_inputs[used[c].view].col(used[c].cell);
    }
    data.pe_blocks.push_back(std::move(block));
    return data;
  }

  int total_tokens = 0;
  for (const auto& g : geom) total_tokens += static_cast<int>(g.size());

  std::vector<double> depth(total_tokens);
  MatrixXd prob;
  if (cfg.variant == PeVariant::kOraclePoint) {
    int col = 0;
    for (const auto& g : geom) {
      for (const auto& t : g) depth[col++] = t.depth;
    }
  } else {
    MatrixXd all_feats(cfg.channels, total_tokens);
    VectorXd gt(total_tokens);
    int col = 0;
    for (std::size_t s = 0; s < data.scenes.size(); ++s) {
      for (std::size_t j = 0; j < geom[s].size(); ++j, ++col) {
        all_feats.col(col) = data.scenes[s].features.col(static_cast<Eigen::Index>(j));
        gt(col) = geom[s][j].depth;
      }
    }
    DepthHeadTrainConfig hcfg = cfg.depth_head;
    hcfg.seed = derive_seed(cfg.seed, kSaltDepthHead);
    const DepthHead head = train_depth_head(all_feats, gt, CellMask(total_tokens, 1), cfg.head_bins, hcfg);
    const DepthHead::Output out = head.forward(all_feats);
    for (int i = 0; i < total_tokens; ++i) depth[i] = out.fused(i);
    prob = out.prob;
  }

  // Per-token sine inputs; bitwise-identical inputs share one PE column.
  const int k = cfg.variant == PeVariant::kTopk ? cfg.topk : 1;
  const Eigen::Index width = 3 * spec.half_dim;
  std::vector<VectorXd> columns;
  std::map<std::vector<double>, int> column_of;
  int col = 0;
  for (std::size_t s = 0; s < data.scenes.size(); ++s) {
    for (const auto& t : geom[s]) {
      const auto& grid = grids[t.view];
      const double u = grid.pixel_u(t.cell % grid.width);
      const double v = grid.pixel_v(t.cell / grid.width);
      VectorXd x(width * k);
      if (cfg.variant == PeVariant::kTopk) {
        const auto order = topk_bins(prob.col(col), k);
        for (int j = 0; j < k; ++j) {
          Vec3 p = normalize_point(back_project(u, v, cfg.head_bins.centers[order[j]], cams[t.view]), cfg.region);
          clamp_unit(p);
          x.segment(j * width, width) = point_sine_features(p, spec);
        }
      } else {
        Vec3 p = normalize_point(back_project(u, v, depth[col], cams[t.view]), cfg.region);
        clamp_unit(p);
        x = point_sine_features(p, spec);
      }
      auto [it, inserted] = column_of.try_emplace(std::vector<double>(x.data(), x.data() + x.size()),
                                                  static_cast<int>(columns.size()));
      if (inserted) columns.push_back(std::move(x));
      data.scenes[s].pe_column.push_back(it->second);
      ++col;
    }
  }
  data.pe_blocks.assign(k, MatrixXd(width, static_cast<Eigen::Index>(columns.size())));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (int j = 0; j < k; ++j) {
      data.pe_blocks[j].col(static_cast<Eigen::Index>(c)) = columns[c].segment(j * width, width);
    }
  }
  return data;
}

TrainResult train_model(ToyModel model, const ToyDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  TrainResult res;
  ToyModel grad;
  const bool gram_path = use_gram_path(model, data) && cfg.steps > 0;
  MatrixXd gram, pre, d_pre, moved, w1;
  if (gram_path) {
    const MatrixXd& x = data.pe_blocks[0];
    gram = x.transpose() * x;
    pre = model.pe_mlp->fc1.forward(x);
    moved = MatrixXd::Zero(pre.rows(), pre.cols());
    // Parked so per-step copies and updates skip the wide matrix.
    w1 = std::move(model.pe_mlp->fc1.weight);
    model.pe_mlp->fc1.weight.resize(w1.rows(), 0);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    const LossResult r =
        gram_path ? loss_impl(model, data, &grad, &pre, &d_pre) : toy_loss(model, data, &grad);
    if (step == 0) res.initial_error_m = r.error_m;
    res.loss_history.push_back(r.loss);
    if (gram_path) {
      const VectorXd d_bias = d_pre.rowwise().sum();
      grad.pe_mlp->fc1.bias = d_bias;
      pre.noalias() -= cfg.lr * (d_pre * gram);
      pre.colwise() -= cfg.lr * d_bias;
      moved.noalias() -= cfg.lr * d_pre;
    }
    model.axpy(-cfg.lr, grad);
    for (auto& a : model.decoder.anchors.points) clamp_unit(a);
  }
  if (gram_path) {
    w1.noalias() += moved * data.pe_blocks[0].transpose();
    model.pe_mlp->fc1.weight = std::move(w1);
  }
  const LossResult final_r = toy_loss(model, data);
  if (cfg.steps == 0) res.initial_error_m = final_r.error_m;
  res.final_error_m = final_r.error_m;
  res.loss_history.push_back(final_r.loss);
  res.model = std::move(model);
  return res;
}

TrainResult train_toy(const std::vector<SimScene>& scenes, const TrainConfig& cfg) {
  RigOptions rig = cfg.rig;
  const auto cams = default_rig(rig);
  const ToyDataset data = build_dataset(scenes, cams, cfg);
  return train_model(init_model(cfg), data, cfg);
}

}  // namespace pe3d
