// Copyright Contributors to the pe3d Project
// SPDX-License-Identifier: Apache-2.0

#include <pe3d/ablation.hpp>
#include <pe3d/analysis.hpp>
#include <pe3d/cli.hpp>
#include <pe3d/error.hpp>
#include <pe3d/gradcheck.hpp>
#include <pe3d/io.hpp>
#include <pe3d/ray_model.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace pe3d::cli {

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string rig_path;
  std::string scene_path;
  int stride = 16;
};

struct EncodeOpts {
  std::string variant = "oracle-point";
  std::string bins = "ud:1:61:64";
  double depth = 15.0;
  int channels = 64;
  int hidden = 256;
  int topk = 5;
};

void add_common(CLI::App* app, Common& c, bool scene) {
  app->add_option("--seed", c.seed, "Random seed (PE3D_SEED overrides)");
  if (!scene) return;
  app->add_option("--rig", c.rig_path, "Rig JSON (default: six-camera surround rig)");
  app->add_option("--scene", c.scene_path, "Scene JSON (default: random one-object scene from the seed)");
  app->add_option("--stride", c.stride, "Pixels per feature cell")->check(CLI::PositiveNumber);
}

void add_encode(CLI::App* app, EncodeOpts& e) {
  app->add_option("--variant", e.variant, "pe2d|camera-ray|lidar-ray|oracle-point|depth-point|topk");
  app->add_option("--bins", e.bins, "Ray bins method:min:max:count");
  app->add_option("--depth", e.depth, "Fixed depth of lidar-ray (m)");
  app->add_option("--channels", e.channels, "PE width C")->check(CLI::PositiveNumber);
  app->add_option("--hidden", e.hidden, "MLP hidden width")->check(CLI::PositiveNumber);
  app->add_option("--topk", e.topk, "Points per cell for topk")->check(CLI::PositiveNumber);
}

std::uint64_t resolve_seed(std::uint64_t flag) {
  const char* env = std::getenv("PE3D_SEED");
  if (!env || !*env) return flag;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw Error(ErrorCode::kInvalidArgument, "PE3D_SEED: not an unsigned integer");
  return v;
}

void print_config(const std::string& cmd, const std::vector<std::pair<std::string, std::string>>& kv,
                  std::uint64_t seed) {
  std::cerr << "pe3d " << cmd << ":";
  for (const auto& [k, v] : kv) std::cerr << " " << k << "=" << v;
  std::cerr << "\nseed: " << seed << "\n";
}

/// Shortest representation that parses back to the same double.
std::string num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Rig, scene, grids and renderings shared by render/encode/similarity.
struct World {
  Rig rig;
  SimScene scene;
  std::vector<GridSpec> grids;
  std::vector<Rendering> renders;
};

World load_world(const Common& c, std::uint64_t seed) {
  World w;
  if (c.rig_path.empty()) {
    w.rig.cameras = default_rig();
  } else {
    w.rig = load_rig(c.rig_path);
  }
  if (c.scene_path.empty()) {
    Rng rng(derive_seed(seed, 1));
    w.scene = random_object_scene(SceneOptions{}, rng);
  } else {
    w.scene = load_scene(c.scene_path);
  }
  w.scene.validate(w.rig.region);
  for (const auto& cam : w.rig.cameras) {
    w.grids.push_back(GridSpec::for_camera(cam, c.stride));
    w.renders.push_back(render(w.scene, cam, w.grids.back()));
  }
  return w;
}

std::vector<PEGrid> encode_world(const World& w, const EncodeOpts& e, std::uint64_t seed) {
  const PeVariant variant = parse_pe_variant(e.variant);
  if (e.channels % 2) throw Error(ErrorCode::kInvalidArgument, "channels: must be even");
  const SineSpec spec{e.channels / 2};
  const int point_in = 3 * spec.half_dim;
  const PerceptionRegion& region = w.rig.region;
  std::vector<PEGrid> out;

  if (variant == PeVariant::kPe2d) {
    for (const auto& g : w.grids) out.push_back(pe2d(g.height, g.width, spec));
    return out;
  }
  if (variant == PeVariant::kCameraRay) {
    const DepthBins bins = parse_bins(e.bins);
    const Mlp mlp = Mlp::init(point_in * bins.count(), e.hidden, e.channels, derive_seed(seed, 3));
    for (std::size_t v = 0; v < w.grids.size(); ++v) {
      out.push_back(pe_camera_ray(w.rig.cameras[v], w.grids[v], bins, mlp, spec, region));
    }
    return out;
  }
  const Mlp mlp = Mlp::init(point_in, e.hidden, e.channels, derive_seed(seed, 3));
  if (variant == PeVariant::kLidarRay) {
    for (std::size_t v = 0; v < w.grids.size(); ++v) {
      out.push_back(pe_lidar_ray(w.rig.cameras[v], w.grids[v], e.depth, mlp, spec, region));
    }
    return out;
  }
  if (variant == PeVariant::kOraclePoint) {
    for (std::size_t v = 0; v < w.grids.size(); ++v) {
      out.push_back(pe_oracle_point(w.renders[v].depth, w.rig.cameras[v], w.grids[v].stride, region, mlp, spec));
    }
    return out;
  }

  // depth-point / topk: a depth head trained on the frozen features of this
  // scene's hit cells supplies the depth estimate.
  const FeatureEmbedding embed = FeatureEmbedding::init(e.channels, 2, derive_seed(seed, 2));
  std::vector<FeatureGrid> feats;
  long valid_cells = 0;
  for (const auto& r : w.renders) {
    feats.push_back(make_feature_grid(r, w.scene, embed));
    for (auto v : r.depth.valid) valid_cells += v;
  }
  if (valid_cells == 0) throw Error(ErrorCode::kNoValidPixels, "no camera sees any surface");
  MatrixXd x(e.channels, valid_cells);
  VectorXd gt(valid_cells);
  long col = 0;
  for (std::size_t v = 0; v < w.renders.size(); ++v) {
    for (std::size_t i = 0; i < w.renders[v].depth.size(); ++i) {
      if (!w.renders[v].depth.valid[i]) continue;
      x.col(col) = feats[v].values.col(static_cast<Eigen::Index>(i));
      gt(col++) = w.renders[v].depth.depth[i];
    }
  }
  const DepthBins head_bins = make_bins(BinMethod::kUD, 1.0, 61.0, 16);
  DepthHeadTrainConfig hcfg;
  hcfg.seed = derive_seed(seed, 6);
  const DepthHead head = train_depth_head(x, gt, CellMask(valid_cells, 1), head_bins, hcfg);
  const TopkEncoder enc =
      variant == PeVariant::kTopk ? TopkEncoder::init(e.topk, point_in, e.hidden, e.channels, derive_seed(seed, 3))
                                  : TopkEncoder{};
  for (std::size_t v = 0; v < w.grids.size(); ++v) {
    const DepthHead::Output o = head.forward(feats[v].values);
    if (variant == PeVariant::kDepthPoint) {
      DepthMap pred = w.renders[v].depth;
      for (std::size_t i = 0; i < pred.size(); ++i) pred.depth[i] = o.fused(static_cast<Eigen::Index>(i));
      out.push_back(pe_depth_point(pred, w.rig.cameras[v], w.grids[v].stride, region, mlp, spec));
    } else {
      const DepthDistribution dist{w.grids[v].height, w.grids[v].width, o.prob};
      out.push_back(pe_topk(dist, head_bins, e.topk, w.rig.cameras[v], w.grids[v].stride, region, enc, spec));
    }
  }
  return out;
}

std::string camera_file(const World& w, std::size_t v, const char* ext) {
  std::string name = w.rig.cameras[v].name();
  if (name.empty()) name = "cam";
  return std::to_string(v) + "_" + name + ext;
}

std::vector<std::pair<std::string, std::string>> world_kv(const Common& c) {
  return {{"rig", c.rig_path.empty() ? "default" : c.rig_path},
          {"scene", c.scene_path.empty() ? "random" : c.scene_path},
          {"stride", std::to_string(c.stride)}};
}

void append_encode_kv(std::vector<std::pair<std::string, std::string>>& kv, const EncodeOpts& e) {
  kv.insert(kv.end(), {{"variant", e.variant},
                       {"bins", e.bins},
                       {"depth", num(e.depth)},
                       {"channels", std::to_string(e.channels)},
                       {"hidden", std::to_string(e.hidden)},
                       {"topk", std::to_string(e.topk)}});
}

CellRef parse_ref(const std::string& s) {
  int view, u, v;
  char extra;
  if (std::sscanf(s.c_str(), "%d:%d:%d%c", &view, &u, &v, &extra) != 3) {
    throw Error(ErrorCode::kInvalidArgument, "ref: expected view:u:v or auto-object, got '" + s + "'");
  }
  return CellRef{view, u, v};
}

void parse_range(const std::string& s, double& lo, double& hi, int& steps) {
  char extra;
  if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &lo, &hi, &steps, &extra) != 3 || !(lo > 0.0) || !(hi >= lo) ||
      steps < 1) {
    throw Error(ErrorCode::kInvalidRange, "d-range: expected min:max:steps with 0 < min <= max, steps >= 1");
  }
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Positional-encoding study toolkit for multi-camera 3D detection"};
  app.require_subcommand(1);

  Common common;
  EncodeOpts enc;

  std::string out_dir;
  auto* render_cmd = app.add_subcommand("render", "Render per-camera depth maps (DPTH) and annotations");
  add_common(render_cmd, common, true);
  render_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* encode_cmd = app.add_subcommand("encode", "Write per-camera PE grids (PE3D)");
  add_common(encode_cmd, common, true);
  add_encode(encode_cmd, enc);
  encode_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string ref = "auto-object";
  std::string out_prefix;
  auto* sim_cmd = app.add_subcommand("similarity", "Cosine-similarity maps of PE against a reference cell");
  add_common(sim_cmd, common, true);
  add_encode(sim_cmd, enc);
  sim_cmd->add_option("--ref", ref, "view:u:v (cell indices) or auto-object");
  sim_cmd->add_option("--out", out_prefix, "Output prefix for .csv and per-view .pgm")->required();

  double alpha_deg = 45.0, dlc = 1.0, delta = 0.7;
  std::string d_range = "1:1000:1000";
  std::string out_path;
  auto* sweep_cmd = app.add_subcommand("discrepancy-sweep", "Camera/LiDAR ray discrepancy over depth");
  sweep_cmd->add_option("--alpha", alpha_deg, "Pixel ray angle alpha_c (degrees)");
  sweep_cmd->add_option("--dlc", dlc, "Camera-LiDAR offset along the view (m)");
  sweep_cmd->add_option("--delta", delta, "Camera-LiDAR offset across the view (m)");
  sweep_cmd->add_option("--d-range", d_range, "min:max:steps, linearly spaced");
  sweep_cmd->add_option("--out", out_path, "CSV path (default: stdout)");

  std::string suite = "table3";
  int seeds = 5;
  std::optional<int> steps;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train the toy detector across a suite of PE settings");
  add_common(ablate_cmd, common, false);
  ablate_cmd->add_option("--suite", suite, "table1|table2|table3|table6");
  ablate_cmd->add_option("--seeds", seeds, "Seeds per configuration")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--steps", steps, "Override training steps")->check(CLI::NonNegativeNumber);
  ablate_cmd->add_option("--out", out_path, "CSV path (default: stdout)");

  int instances = 100;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic vs finite-difference gradients");
  add_common(grad_cmd, common, false);
  grad_cmd->add_option("--instances", instances, "Instances per operation")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    const std::uint64_t seed = resolve_seed(common.seed);

    if (*render_cmd) {
      auto kv = world_kv(common);
      kv.emplace_back("out-dir", out_dir);
      print_config("render", kv, seed);
      const World w = load_world(common, seed);
      std::filesystem::create_directories(out_dir);
      for (std::size_t v = 0; v < w.renders.size(); ++v) {
        write_file(out_dir + "/" + camera_file(w, v, ".dpth"), encode_depth_map(w.renders[v].depth));
      }
      write_file(out_dir + "/annotations.json", annotations_to_json(w.scene));
      return kExitOk;
    }

    if (*encode_cmd) {
      auto kv = world_kv(common);
      append_encode_kv(kv, enc);
      kv.emplace_back("out-dir", out_dir);
      print_config("encode", kv, seed);
      const World w = load_world(common, seed);
      const auto grids = encode_world(w, enc, seed);
      std::filesystem::create_directories(out_dir);
      for (std::size_t v = 0; v < grids.size(); ++v) {
        write_file(out_dir + "/" + camera_file(w, v, ".pe3d"), encode_pe_grid(grids[v]));
      }
      return kExitOk;
    }

    if (*sim_cmd) {
      auto kv = world_kv(common);
      append_encode_kv(kv, enc);
      kv.emplace_back("ref", ref);
      kv.emplace_back("out", out_prefix);
      print_config("similarity", kv, seed);
      const World w = load_world(common, seed);
      const auto grids = encode_world(w, enc, seed);
      const CellRef cell =
          ref == "auto-object" ? auto_object_reference(w.scene, w.rig.cameras, w.grids, w.renders) : parse_ref(ref);
      const SimilarityMap map = similarity_map(grids, cell);
      write_file(out_prefix + ".csv", similarity_to_csv(map));
      for (std::size_t v = 0; v < map.views.size(); ++v) {
        write_file(out_prefix + "_view" + std::to_string(v) + ".pgm", similarity_to_pgm(map.views[v]));
      }
      std::cout << "reference " << cell.view << ":" << cell.u << ":" << cell.v << "\n";
      const int prim = w.renders[cell.view].hit[cell.v * w.grids[cell.view].width + cell.u];
      if (prim >= 0 && w.scene.class_of(prim) != 0) {
        const Cohesion c = cohesion_metric(map, object_masks(w.renders, prim));
        std::cout << "object_mean " << num(c.object_mean) << "\nbackground_mean " << num(c.background_mean)
                  << "\nmargin " << num(c.margin) << "\n";
      }
      return kExitOk;
    }

    if (*sweep_cmd) {
      print_config("discrepancy-sweep",
                   {{"alpha", num(alpha_deg)}, {"dlc", num(dlc)}, {"delta", num(delta)}, {"d-range", d_range},
                    {"out", out_path.empty() ? "stdout" : out_path}},
                   seed);
      double lo, hi;
      int n;
      parse_range(d_range, lo, hi, n);
      std::string csv = "d,Dis\n";
      for (int i = 0; i < n; ++i) {
        const double d = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
        const RayGeometry g{alpha_deg * M_PI / 180.0, d, dlc, delta};
        csv += num(d) + "," + num(discrepancy(g)) + "\n";
      }
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        write_file(out_path, csv);
      }
      return kExitOk;
    }

    if (*ablate_cmd) {
      TrainConfig base;
      if (steps) base.steps = *steps;
      print_config("ablate",
                   {{"suite", suite},
                    {"seeds", std::to_string(seeds)},
                    {"steps", std::to_string(base.steps)},
                    {"lr", num(base.lr)},
                    {"channels", std::to_string(base.channels)},
                    {"hidden", std::to_string(base.hidden)},
                    {"scenes", std::to_string(base.scenes)},
                    {"stride", std::to_string(base.stride)},
                    {"out", out_path.empty() ? "stdout" : out_path}},
                   seed);
      const auto cells = suite_cells(parse_suite(suite), base);
      const auto rows = ablation_suite(cells, seeds, seed, [](const AblationRow& r) {
        std::cerr << r.variant << " " << r.params << " seed " << r.seed << ": " << num(r.final_error_m) << " m\n";
      });
      const std::string csv = rows_to_csv(rows);
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        write_file(out_path, csv);
      }
      return kExitOk;
    }

    if (*grad_cmd) {
      print_config("gradcheck", {{"instances", std::to_string(instances)}}, seed);
      bool ok = true;
      for (const auto& r : run_gradchecks(seed, instances)) {
        std::printf("%s %s max_rel_error=%.3e tol=%.0e instances=%d\n", r.pass ? "PASS" : "FAIL", r.op.c_str(),
                    r.max_rel_error, r.tolerance, r.instances);
        ok = ok && r.pass;
      }
      std::fflush(stdout);
      return ok ? kExitOk : kExitData;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc)); }

}  // namespace pe3d::cli
